use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: u64,
    pub p95_ms: u64,
    pub max_ms: u64,
    /// Mean of the configured one-way delay over the same
    /// (publisher, receiver) pairs.
    pub expected_mean_ms: f64,
}

impl LatencyStats {
    /// `samples` pairs a measured latency with its delay-model expectation.
    pub fn from_samples(samples: &[(u64, u64)]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut v: Vec<u64> = samples.iter().map(|s| s.0).collect();
        v.sort_unstable();
        let n = v.len();
        let pct = |p: f64| v[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
        Self {
            count: n,
            mean_ms: v.iter().sum::<u64>() as f64 / n as f64,
            p50_ms: pct(0.5),
            p95_ms: pct(0.95),
            max_ms: v[n - 1],
            expected_mean_ms: samples.iter().map(|s| s.1).sum::<u64>() as f64 / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionResult {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    /// Whether every active member ended with the same document.
    pub converged: bool,
    pub active_peers: Vec<String>,
    /// Hex SHA-256 of each member's document snapshot.
    pub digests: BTreeMap<String, String>,
    pub latency: LatencyStats,
    pub latency_samples_ms: Vec<u64>,
    pub publications: usize,
    pub deliveries: usize,
    pub violations: Vec<String>,
    pub assertions: Vec<AssertionResult>,
    pub end_time_ms: u64,
    pub packets_sent: u64,
    pub packets_dropped: u64,
    pub log_lines: usize,
    pub log_digest: String,
    pub event_log_path: Option<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssertionResult> {
        self.assertions.iter().filter(|a| !a.passed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles() {
        let s: Vec<(u64, u64)> = (1..=100).map(|i| (i, 50)).collect();
        let l = LatencyStats::from_samples(&s);
        assert_eq!((l.count, l.p50_ms, l.p95_ms, l.max_ms), (100, 50, 95, 100));
        assert!((l.mean_ms - 50.5).abs() < 1e-9);
        assert_eq!(l.expected_mean_ms, 50.0);
        assert_eq!(LatencyStats::from_samples(&[]).count, 0);
    }
}

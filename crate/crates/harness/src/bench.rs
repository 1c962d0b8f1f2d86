//! Latency sweep: 16 users on 4 routers publishing 100-byte edits once a
//! second, at several link delays.

use crate::runner::{run_scenario, RunError, RunOptions};
use crate::scenario::Scenario;
use serde_json::json;

pub const BENCH_DELAYS_MS: [u64; 3] = [25, 50, 95];
pub const BENCH_USERS: usize = 16;
pub const BENCH_ROUTERS: usize = 4;

#[derive(Debug, Clone)]
pub struct BenchParams {
    pub delays_ms: Vec<u64>,
    pub seeds: Vec<u64>,
    pub users: usize,
    pub routers: usize,
    pub duration_ms: u64,
    pub payload_bytes: usize,
    pub coalesce_ms: u64,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            delays_ms: BENCH_DELAYS_MS.to_vec(),
            seeds: vec![1],
            users: BENCH_USERS,
            routers: BENCH_ROUTERS,
            duration_ms: 30_000,
            payload_bytes: 100,
            coalesce_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scenario: String,
    pub delay_ms: u64,
    pub seed: u64,
    pub mean_ms: f64,
    pub expected_ms: f64,
    pub p50_ms: u64,
    pub p95_ms: u64,
    pub deliveries: usize,
    pub converged: bool,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "scenario,delay_ms,seed,mean_ms,expected_ms,rel_err,p50_ms,p95_ms,deliveries,converged";

    pub fn rel_err(&self) -> f64 {
        if self.expected_ms == 0.0 {
            return 0.0;
        }
        (self.mean_ms - self.expected_ms).abs() / self.expected_ms
    }

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{:.3},{:.3},{:.5},{},{},{},{}",
            self.scenario,
            self.delay_ms,
            self.seed,
            self.mean_ms,
            self.expected_ms,
            self.rel_err(),
            self.p50_ms,
            self.p95_ms,
            self.deliveries,
            self.converged
        )
    }
}

/// Peers are spread round-robin over the routers, so each router hosts
/// `users / routers` of them.
pub fn latency_scenario(p: &BenchParams, delay_ms: u64, seed: u64) -> Scenario {
    let users: Vec<String> = (0..p.users).map(|i| format!("user{i:02}")).collect();
    let peers: Vec<_> = users.iter().enumerate().map(|(i, u)| json!({"username": u, "router": i % p.routers.max(1)})).collect();
    let invitations: Vec<_> = users[1..].iter().map(|u| json!({"inviter": users[0], "invitee": u})).collect();
    let v = json!({
        "name": format!("latency{}-d{delay_ms}", p.users),
        "seed": seed,
        "workspace": {"name": "/bench.example/latency"},
        "peers": peers,
        "invitations": invitations,
        "links": {"delay_ms": delay_ms},
        "load": {"start_ms": 1000, "duration_ms": p.duration_ms, "interval_ms": 1000, "payload_bytes": p.payload_bytes},
        "settings": {"coalesce_ms": p.coalesce_ms},
        "assertions": [{"check": "converged"}, {"check": "no_violations"}],
    });
    serde_json::from_value(v).expect("generated scenario is well formed")
}

pub fn run_bench(p: &BenchParams) -> Result<Vec<BenchRow>, RunError> {
    let mut rows = Vec::new();
    for &d in &p.delays_ms {
        for &seed in &p.seeds {
            let (r, _) = run_scenario(latency_scenario(p, d, seed), &RunOptions::default())?;
            rows.push(BenchRow {
                scenario: r.scenario.clone(),
                delay_ms: d,
                seed,
                mean_ms: r.latency.mean_ms,
                expected_ms: r.latency.expected_mean_ms,
                p50_ms: r.latency.p50_ms,
                p95_ms: r.latency.p95_ms,
                deliveries: r.latency.count,
                converged: r.converged,
            });
        }
    }
    Ok(rows)
}

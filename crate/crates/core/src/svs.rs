//! State vector sync.
//!
//! Each peer multicasts its state vector (highest sequence number seen per
//! producer) in a Sync Interest under `<ws>/SYNC`. Receivers merge it, fetch
//! the gaps, and answer stale vectors after a randomized suppression delay so
//! that usually a single peer replies. A slow periodic Sync Interest bounds
//! recovery time after partitions.
//!
//! [`SyncEngine`] is a pure state machine: callers feed it time, vectors and
//! delivery outcomes, and act on the [`SyncOutput`]s it returns.

use crate::name::Name;
use crate::packet::{DataPacket, InterestPacket};
use crate::tlv::{self, tags, Reader, TlvError};
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct StateVector(BTreeMap<String, u64>);

impl StateVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, user: &str) -> u64 {
        self.0.get(user).copied().unwrap_or(0)
    }

    /// Raises `user`'s entry to at least `seq`.
    pub fn raise(&mut self, user: &str, seq: u64) {
        if seq > self.get(user) {
            self.0.insert(user.to_string(), seq);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sum of all entries: the number of publications the vector covers.
    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    /// `StateVector { StateVectorEntry { NameComponent user, SeqNum n } * }`,
    /// entries sorted by user bytes.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        tlv::write_nested(&mut out, tags::STATE_VECTOR, |b| {
            for (user, seq) in &self.0 {
                tlv::write_nested(b, tags::STATE_VECTOR_ENTRY, |e| {
                    tlv::write_tlv(e, tags::NAME_COMPONENT, user.as_bytes());
                    tlv::write_nonneg(e, tags::SEQ_NUM, *seq);
                });
            }
        });
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TlvError> {
        Self::decode_value(tlv::read_outer(bytes, tags::STATE_VECTOR)?)
    }

    pub fn decode_value(value: &[u8]) -> Result<Self, TlvError> {
        let mut r = Reader::new(value);
        let mut map = BTreeMap::new();
        let mut last: Option<String> = None;
        while r.peek_type()?.is_some() {
            let mut e = Reader::new(r.expect(tags::STATE_VECTOR_ENTRY, "StateVectorEntry")?);
            let user = std::str::from_utf8(e.expect(tags::NAME_COMPONENT, "user")?)
                .map_err(|_| TlvError::InvalidValue("user is not UTF-8"))?
                .to_string();
            let seq = tlv::parse_nonneg(e.expect(tags::SEQ_NUM, "SeqNum")?)?;
            e.finish()?;
            if user.is_empty() || seq == 0 {
                return Err(TlvError::InvalidValue("empty user or zero sequence number"));
            }
            if last.as_ref().is_some_and(|l| l.as_bytes() >= user.as_bytes()) {
                return Err(TlvError::InvalidValue("entries not strictly sorted"));
            }
            last = Some(user.clone());
            map.insert(user, seq);
        }
        Ok(Self(map))
    }
}

impl<S: Into<String>> FromIterator<(S, u64)> for StateVector {
    fn from_iter<I: IntoIterator<Item = (S, u64)>>(iter: I) -> Self {
        let mut v = StateVector::new();
        for (u, s) in iter {
            v.raise(&u.into(), s);
        }
        v
    }
}

/// Componentwise maximum.
pub fn sv_merge(a: &StateVector, b: &StateVector) -> StateVector {
    let mut out = a.clone();
    for (u, s) in b.iter() {
        out.raise(u, s);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparison {
    Equal,
    LocalNewer,
    RemoteNewer,
    Divergent,
}

pub fn sv_compare(local: &StateVector, remote: &StateVector) -> Comparison {
    let users: BTreeSet<&str> = local.iter().chain(remote.iter()).map(|(u, _)| u).collect();
    let (mut local_ahead, mut remote_ahead) = (false, false);
    for u in users {
        let (l, r) = (local.get(u), remote.get(u));
        local_ahead |= l > r;
        remote_ahead |= r > l;
    }
    match (local_ahead, remote_ahead) {
        (false, false) => Comparison::Equal,
        (true, false) => Comparison::LocalNewer,
        (false, true) => Comparison::RemoteNewer,
        (true, true) => Comparison::Divergent,
    }
}

/// Sync Interest parameters: the vector, optionally followed by Data packets
/// carried along so that receivers need not fetch them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncPayload {
    pub vector: StateVector,
    pub piggyback: Vec<DataPacket>,
}

impl SyncPayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.vector.encode();
        for d in &self.piggyback {
            out.extend(d.encode());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TlvError> {
        let mut r = Reader::new(bytes);
        let vector = StateVector::decode_value(r.expect(tags::STATE_VECTOR, "StateVector")?)?;
        let mut piggyback = Vec::new();
        while let Some((t, v)) = r.read()? {
            match t {
                tags::DATA => piggyback.push(DataPacket::decode_value(v)?),
                t if tlv::is_critical(t) => return Err(TlvError::UnknownTlvType(t)),
                _ => {}
            }
        }
        Ok(Self { vector, piggyback })
    }

    pub fn to_interest(&self, group: &Name) -> InterestPacket {
        InterestPacket {
            name: group.clone(),
            can_be_prefix: false,
            app_params: Some(self.encode()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncConfig {
    pub steady_interval_ms: u64,
    /// Fraction of the steady interval used as +/- jitter.
    pub steady_jitter: f64,
    pub suppression_max_ms: u64,
    pub retry_base_ms: u64,
    pub retry_max_ms: u64,
    /// Validation failures after which a publication is given up on.
    pub max_validation_failures: u32,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            steady_interval_ms: 30_000,
            steady_jitter: 0.1,
            suppression_max_ms: 200,
            retry_base_ms: 1000,
            retry_max_ms: 32_000,
            max_validation_failures: 3,
        }
    }
}

impl SyncConfig {
    /// Reply delay for a stale vector. Skewed towards the maximum so that the
    /// earliest replier is usually well ahead of the rest.
    pub fn suppression_delay(&self, rng: &mut impl Rng) -> u64 {
        let c = self.suppression_max_ms as f64;
        if c == 0.0 {
            return 0;
        }
        let u: f64 = rng.gen();
        (c * (1.0 - (-10.0 * (1.0 - u)).exp())).round() as u64
    }

    fn steady_delay(&self, rng: &mut impl Rng) -> u64 {
        let base = self.steady_interval_ms as f64;
        let j = base * self.steady_jitter;
        let d = if j > 0.0 { base + rng.gen_range(-j..=j) } else { base };
        d.max(1.0).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Fetch {
    next_at: u64,
    backoff: u64,
    attempts: u32,
    failures: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyncOutput {
    /// Multicast a Sync Interest carrying the local vector.
    EmitSync,
    /// Send an Interest for `<ws>/<user>/DATA/seq=<seq>`.
    Fetch(String, u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncReaction {
    pub comparison: Comparison,
    /// Publications newly queued for fetching.
    pub enqueued: Vec<(String, u64)>,
}

#[derive(Debug, Clone)]
pub struct SyncEngine {
    /// `None` for a passive participant (a repo) that never publishes and
    /// never answers stale vectors itself.
    me: Option<String>,
    cfg: SyncConfig,
    local: StateVector,
    pending: BTreeMap<(String, u64), Fetch>,
    delivered: BTreeSet<(String, u64)>,
    abandoned: BTreeSet<(String, u64)>,
    suppression_at: Option<u64>,
    steady_at: Option<u64>,
    malformed: u64,
}

impl SyncEngine {
    pub fn new(me: Option<&str>, cfg: SyncConfig, now: u64, rng: &mut impl Rng) -> Self {
        let steady_at = me.is_some().then(|| now + cfg.steady_delay(rng));
        Self {
            me: me.map(str::to_string),
            cfg,
            local: StateVector::new(),
            pending: BTreeMap::new(),
            delivered: BTreeSet::new(),
            abandoned: BTreeSet::new(),
            suppression_at: None,
            steady_at,
            malformed: 0,
        }
    }

    pub fn config(&self) -> &SyncConfig {
        &self.cfg
    }

    pub fn local(&self) -> &StateVector {
        &self.local
    }

    pub fn me(&self) -> Option<&str> {
        self.me.as_deref()
    }

    pub fn payload(&self, piggyback: Vec<DataPacket>) -> SyncPayload {
        SyncPayload {
            vector: self.local.clone(),
            piggyback,
        }
    }

    /// Allocates the next own sequence number. The caller multicasts a Sync
    /// Interest right away, which also satisfies any pending reply.
    pub fn on_local_publish(&mut self, now: u64, rng: &mut impl Rng) -> u64 {
        let me = self.me.clone().expect("passive engines do not publish");
        let seq = self.local.get(&me) + 1;
        self.local.raise(&me, seq);
        self.delivered.insert((me, seq));
        self.sent_sync(now, rng);
        seq
    }

    /// Records that a Sync Interest with the local vector went out.
    pub fn sent_sync(&mut self, now: u64, rng: &mut impl Rng) {
        self.suppression_at = None;
        if self.me.is_some() {
            self.steady_at = Some(now + self.cfg.steady_delay(rng));
        }
    }

    /// Re-establishes state from persisted publications after a restart.
    pub fn restore(&mut self, user: &str, seq: u64) {
        self.local.raise(user, seq);
        self.delivered.insert((user.to_string(), seq));
        self.pending.remove(&(user.to_string(), seq));
    }

    /// Queues every gap up to the local vector that is neither delivered
    /// nor already queued.
    fn enqueue_gaps(&mut self, now: u64) -> Vec<(String, u64)> {
        let mut out = Vec::new();
        for (u, top) in self.local.iter() {
            for s in 1..=top {
                let key = (u.to_string(), s);
                if self.delivered.contains(&key) || self.pending.contains_key(&key) || self.abandoned.contains(&key) {
                    continue;
                }
                self.pending.insert(
                    key.clone(),
                    Fetch {
                        next_at: now,
                        backoff: self.cfg.retry_base_ms,
                        attempts: 0,
                        failures: 0,
                    },
                );
                out.push(key);
            }
        }
        out
    }

    pub fn on_sync_bytes(&mut self, params: &[u8], now: u64, rng: &mut impl Rng) -> Option<(SyncReaction, Vec<DataPacket>)> {
        match SyncPayload::decode(params) {
            Ok(p) => Some((self.on_sync_interest(&p.vector, now, rng), p.piggyback)),
            Err(_) => {
                self.malformed += 1;
                None
            }
        }
    }

    pub fn on_sync_interest(&mut self, remote: &StateVector, now: u64, rng: &mut impl Rng) -> SyncReaction {
        // A peer that lost its own state learns its previous counter back
        // and refetches what it had published.
        let mut relearned = false;
        if let Some(me) = &self.me {
            let mine = remote.get(me);
            if mine > self.local.get(me) {
                self.local.raise(&me.clone(), mine);
                relearned = true;
            }
        }
        let cmp = sv_compare(&self.local, remote);
        let mut enqueued = if relearned { self.enqueue_gaps(now) } else { Vec::new() };
        match cmp {
            Comparison::Equal => {
                self.suppression_at = None;
                if self.me.is_some() {
                    self.steady_at = Some(now + self.cfg.steady_delay(rng));
                }
            }
            Comparison::RemoteNewer => {
                self.local = sv_merge(&self.local, remote);
                enqueued.extend(self.enqueue_gaps(now));
                self.suppression_at = None;
            }
            Comparison::LocalNewer | Comparison::Divergent => {
                if cmp == Comparison::Divergent {
                    self.local = sv_merge(&self.local, remote);
                    enqueued.extend(self.enqueue_gaps(now));
                }
                if self.me.is_some() && self.suppression_at.is_none() {
                    self.suppression_at = Some(now + self.cfg.suppression_delay(rng));
                }
            }
        }
        SyncReaction {
            comparison: cmp,
            enqueued,
        }
    }

    /// Marks a publication as handed to the application. Returns false for
    /// duplicates.
    pub fn on_delivered(&mut self, user: &str, seq: u64) -> bool {
        let key = (user.to_string(), seq);
        self.pending.remove(&key);
        self.local.raise(user, seq);
        self.delivered.insert(key)
    }

    pub fn is_delivered(&self, user: &str, seq: u64) -> bool {
        self.delivered.contains(&(user.to_string(), seq))
    }

    /// Postpones the next fetch of a queued publication, e.g. while
    /// certificates for a piggybacked copy are being fetched.
    pub fn defer(&mut self, user: &str, seq: u64, until: u64) {
        let key = (user.to_string(), seq);
        if self.delivered.contains(&key) || self.abandoned.contains(&key) {
            return;
        }
        let base = self.cfg.retry_base_ms;
        let f = self.pending.entry(key).or_insert(Fetch {
            next_at: until,
            backoff: base,
            attempts: 0,
            failures: 0,
        });
        f.next_at = f.next_at.max(until);
    }

    /// Counts a validation failure. Returns true if the publication is now
    /// abandoned.
    pub fn on_validation_failure(&mut self, user: &str, seq: u64) -> bool {
        let key = (user.to_string(), seq);
        let Some(f) = self.pending.get_mut(&key) else {
            return self.abandoned.contains(&key);
        };
        f.failures += 1;
        if f.failures >= self.cfg.max_validation_failures {
            self.pending.remove(&key);
            self.abandoned.insert(key);
            true
        } else {
            false
        }
    }

    pub fn is_abandoned(&self, user: &str, seq: u64) -> bool {
        self.abandoned.contains(&(user.to_string(), seq))
    }

    /// Issues every due fetch through `issue` and schedules its retry with
    /// exponential backoff.
    pub fn fetch_pipeline(&mut self, now: u64, mut issue: impl FnMut(&str, u64)) {
        let max = self.cfg.retry_max_ms;
        for ((u, s), f) in self.pending.iter_mut() {
            if f.next_at <= now {
                issue(u, *s);
                f.attempts += 1;
                f.next_at = now + f.backoff;
                f.backoff = (f.backoff * 2).min(max);
            }
        }
    }

    /// Everything due at `now`.
    pub fn poll(&mut self, now: u64, rng: &mut impl Rng) -> Vec<SyncOutput> {
        let mut out = Vec::new();
        let sync_due = self.suppression_at.is_some_and(|t| t <= now) || self.steady_at.is_some_and(|t| t <= now);
        if sync_due {
            out.push(SyncOutput::EmitSync);
            self.sent_sync(now, rng);
        }
        self.fetch_pipeline(now, |u, s| out.push(SyncOutput::Fetch(u.to_string(), s)));
        out
    }

    pub fn next_deadline(&self) -> Option<u64> {
        [
            self.suppression_at,
            self.steady_at,
            self.pending.values().map(|f| f.next_at).min(),
        ]
        .into_iter()
        .flatten()
        .min()
    }

    /// Whether a reply to a stale vector is scheduled.
    pub fn suppression_pending(&self) -> bool {
        self.suppression_at.is_some()
    }

    pub fn pending(&self) -> impl Iterator<Item = (&str, u64)> {
        self.pending.keys().map(|(u, s)| (u.as_str(), *s))
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    pub fn delivered_count(&self) -> usize {
        self.delivered.len()
    }

    pub fn malformed_count(&self) -> u64 {
        self.malformed
    }

    /// Drops timers, e.g. when going offline. Pending fetches stay queued.
    pub fn pause(&mut self) {
        self.suppression_at = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sv(entries: &[(&str, u64)]) -> StateVector {
        entries.iter().map(|(u, s)| (*u, *s)).collect()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn merge_examples() {
        assert_eq!(sv_merge(&sv(&[("A", 3), ("B", 1)]), &sv(&[("A", 2), ("B", 4)])), sv(&[("A", 3), ("B", 4)]));
        let x = sv(&[("A", 3)]);
        assert_eq!(sv_merge(&x, &x), x);
        assert_eq!(sv_merge(&x, &StateVector::new()), x);
    }

    #[test]
    fn compare_examples() {
        assert_eq!(sv_compare(&sv(&[("A", 3)]), &sv(&[("A", 3)])), Comparison::Equal);
        assert_eq!(sv_compare(&sv(&[("A", 3), ("B", 1)]), &sv(&[("A", 1), ("B", 3)])), Comparison::Divergent);
        assert_eq!(sv_compare(&sv(&[("A", 3)]), &sv(&[("A", 1)])), Comparison::LocalNewer);
        assert_eq!(sv_compare(&sv(&[("A", 1)]), &sv(&[("A", 1), ("B", 1)])), Comparison::RemoteNewer);
    }

    #[test]
    fn tlv_rejects_noncanonical() {
        let v = sv(&[("bob", 2), ("alice", 7)]);
        assert_eq!(StateVector::decode(&v.encode()).unwrap(), v);
        let mut bad = Vec::new();
        tlv::write_nested(&mut bad, tags::STATE_VECTOR, |b| {
            for u in ["b", "a"] {
                tlv::write_nested(b, tags::STATE_VECTOR_ENTRY, |e| {
                    tlv::write_tlv(e, tags::NAME_COMPONENT, u.as_bytes());
                    tlv::write_nonneg(e, tags::SEQ_NUM, 1);
                });
            }
        });
        assert!(StateVector::decode(&bad).is_err());
    }

    #[test]
    fn publish_numbers_are_monotone() {
        let mut r = rng();
        let mut e = SyncEngine::new(Some("A"), SyncConfig::default(), 0, &mut r);
        assert_eq!(e.on_local_publish(0, &mut r), 1);
        assert_eq!(e.on_local_publish(5, &mut r), 2);
        let payload = e.payload(vec![]);
        assert_eq!(SyncPayload::decode(&payload.encode()).unwrap().vector, sv(&[("A", 2)]));
    }

    #[test]
    fn remote_newer_enqueues_gaps() {
        let mut r = rng();
        let mut e = SyncEngine::new(Some("A"), SyncConfig::default(), 0, &mut r);
        e.on_local_publish(0, &mut r);
        let re = e.on_sync_interest(&sv(&[("A", 1), ("B", 2)]), 10, &mut r);
        assert_eq!(re.comparison, Comparison::RemoteNewer);
        assert_eq!(re.enqueued, vec![("B".to_string(), 1), ("B".to_string(), 2)]);
        assert_eq!(e.poll(10, &mut r), vec![SyncOutput::Fetch("B".into(), 1), SyncOutput::Fetch("B".into(), 2)]);
        // Retries back off: 1 s, then 2 s.
        assert!(e.poll(1009, &mut r).is_empty());
        assert_eq!(e.poll(1010, &mut r).len(), 2);
        assert!(e.poll(3009, &mut r).is_empty());
        assert!(e.on_delivered("B", 1));
        assert!(!e.on_delivered("B", 1));
        assert_eq!(e.poll(3010, &mut r), vec![SyncOutput::Fetch("B".into(), 2)]);
    }

    #[test]
    fn stale_vector_gets_suppressed_reply() {
        let mut r = rng();
        let mut e = SyncEngine::new(Some("A"), SyncConfig::default(), 0, &mut r);
        for _ in 0..5 {
            e.on_local_publish(0, &mut r);
        }
        let re = e.on_sync_interest(&sv(&[("A", 2)]), 100, &mut r);
        assert_eq!(re.comparison, Comparison::LocalNewer);
        assert!(e.suppression_pending());
        let t = e.next_deadline().unwrap();
        assert!((100..=300).contains(&t));
        // An equal vector heard first cancels the reply.
        e.on_sync_interest(&sv(&[("A", 5)]), 101, &mut r);
        assert!(!e.suppression_pending());
        e.on_sync_interest(&sv(&[("A", 2)]), 102, &mut r);
        let t = e.next_deadline().unwrap();
        assert_eq!(e.poll(t, &mut r), vec![SyncOutput::EmitSync]);
    }

    #[test]
    fn equal_vector_only_resets_timer() {
        let mut r = rng();
        let mut e = SyncEngine::new(Some("A"), SyncConfig::default(), 0, &mut r);
        e.on_local_publish(0, &mut r);
        let re = e.on_sync_interest(&sv(&[("A", 1)]), 20_000, &mut r);
        assert_eq!(re, SyncReaction { comparison: Comparison::Equal, enqueued: vec![] });
        assert!(e.next_deadline().unwrap() >= 20_000 + 27_000);
    }

    #[test]
    fn validation_failures_abandon() {
        let mut r = rng();
        let mut e = SyncEngine::new(Some("A"), SyncConfig::default(), 0, &mut r);
        e.on_sync_interest(&sv(&[("B", 1)]), 0, &mut r);
        assert!(!e.on_validation_failure("B", 1));
        assert!(!e.on_validation_failure("B", 1));
        assert!(e.on_validation_failure("B", 1));
        assert!(!e.has_pending());
        e.on_sync_interest(&sv(&[("B", 1)]), 0, &mut r);
        assert!(!e.has_pending());
    }

    #[test]
    fn relearns_own_counter() {
        let mut r = rng();
        let mut e = SyncEngine::new(Some("A"), SyncConfig::default(), 0, &mut r);
        e.on_sync_interest(&sv(&[("A", 4)]), 0, &mut r);
        assert_eq!(e.pending().count(), 4);
        assert_eq!(e.on_local_publish(1, &mut r), 5);
    }

    #[test]
    fn malformed_counted() {
        let mut r = rng();
        let mut e = SyncEngine::new(Some("A"), SyncConfig::default(), 0, &mut r);
        assert!(e.on_sync_bytes(&[1, 2, 3], 0, &mut r).is_none());
        assert_eq!(e.malformed_count(), 1);
    }

    #[test]
    fn suppression_delay_shape() {
        let cfg = SyncConfig::default();
        let mut r = rng();
        let samples: Vec<u64> = (0..10_000).map(|_| cfg.suppression_delay(&mut r)).collect();
        assert!(samples.iter().all(|&d| d <= 200));
        let early = samples.iter().filter(|&&d| d < 100).count() as f64 / 1e4;
        // P(delay < c/2) = ln(2)/10.
        assert!((early - 0.0693).abs() < 0.01, "{early}");
    }

    fn arb_sv() -> impl Strategy<Value = StateVector> {
        prop::collection::btree_map("[a-d]", 1u64..20, 0..4).prop_map(|m| m.into_iter().collect())
    }

    proptest! {
        #[test]
        fn merge_is_a_semilattice(a in arb_sv(), b in arb_sv(), c in arb_sv()) {
            prop_assert_eq!(sv_merge(&a, &b), sv_merge(&b, &a));
            prop_assert_eq!(sv_merge(&sv_merge(&a, &b), &c), sv_merge(&a, &sv_merge(&b, &c)));
            prop_assert_eq!(sv_merge(&a, &a), a.clone());
            let m = sv_merge(&a, &b);
            prop_assert!(matches!(sv_compare(&m, &a), Comparison::Equal | Comparison::LocalNewer));
        }

        #[test]
        fn vector_tlv_roundtrip(a in arb_sv()) {
            prop_assert_eq!(StateVector::decode(&a.encode()).unwrap(), a);
        }
    }
}

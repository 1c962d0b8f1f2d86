use crate::name::Name;
use crate::packet::Packet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

pub type PeerId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    All,
    To(PeerId),
}

/// Packets a node wants sent, collected during one callback.
#[derive(Debug, Default)]
pub struct Outbox {
    items: Vec<(Dest, Packet)>,
}

impl Outbox {
    pub fn multicast(&mut self, p: impl Into<Packet>) {
        self.items.push((Dest::All, p.into()));
    }

    pub fn unicast(&mut self, to: PeerId, p: impl Into<Packet>) {
        self.items.push((Dest::To(to), p.into()));
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn drain(&mut self) -> impl Iterator<Item = (Dest, Packet)> + '_ {
        self.items.drain(..)
    }
}

/// A protocol endpoint driven by the simulator (or any other transport).
pub trait Node {
    fn label(&self) -> &str;
    fn on_packet(&mut self, now: u64, from: PeerId, packet: Packet, out: &mut Outbox);
    fn on_timer(&mut self, now: u64, out: &mut Outbox);
    fn next_deadline(&self) -> Option<u64>;
    fn on_online(&mut self, _now: u64, _out: &mut Outbox) {}
    fn on_offline(&mut self, _now: u64) {}
    /// Whether the node still has outstanding work (fetches in flight).
    fn busy(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    /// One-hop delay D. Peers on the same router are one hop apart, peers on
    /// different routers two.
    pub delay_ms: u64,
    pub loss: f64,
    /// Router of each peer; peers past the end share router 0.
    pub routers: Vec<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            delay_ms: 50,
            loss: 0.0,
            routers: Vec::new(),
        }
    }
}

impl NetConfig {
    pub fn router(&self, p: PeerId) -> usize {
        self.routers.get(p).copied().unwrap_or(0)
    }

    pub fn delay(&self, a: PeerId, b: PeerId) -> u64 {
        if self.router(a) == self.router(b) {
            self.delay_ms
        } else {
            2 * self.delay_ms
        }
    }
}

#[derive(Debug)]
enum Kind {
    Deliver { to: PeerId, from: PeerId, bytes: Vec<u8>, name: Name },
    Timer { peer: PeerId },
}

#[derive(Debug)]
struct Event {
    at: u64,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, o: &Self) -> bool {
        (self.at, self.seq) == (o.at, o.seq)
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Event {
    fn cmp(&self, o: &Self) -> Ordering {
        (self.at, self.seq).cmp(&(o.at, o.seq))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NetStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
}

/// Deterministic discrete-event network: one multicast bus plus unicast
/// replies, virtual time in milliseconds. Every packet crosses the wire
/// encoded, and every event is logged as
/// `<t_ms> <peer> <SEND|RECV|DROP|TIMER> <name>`.
pub struct SimNet<N: Node> {
    now: u64,
    cfg: NetConfig,
    rng: ChaCha8Rng,
    nodes: Vec<N>,
    online: Vec<bool>,
    groups: Option<Vec<u32>>,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    timer_at: Vec<Option<u64>>,
    in_flight: usize,
    log: Vec<String>,
    stats: NetStats,
}

impl<N: Node> SimNet<N> {
    pub fn new(cfg: NetConfig, nodes: Vec<N>, seed: u64) -> Self {
        let n = nodes.len();
        let mut net = Self {
            now: 0,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            nodes,
            online: vec![true; n],
            groups: None,
            queue: BinaryHeap::new(),
            seq: 0,
            timer_at: vec![None; n],
            in_flight: 0,
            log: Vec::new(),
            stats: NetStats::default(),
        };
        for i in 0..n {
            net.reschedule(i);
        }
        net
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn set_loss(&mut self, loss: f64) {
        self.cfg.loss = loss;
    }

    pub fn nodes(&self) -> &[N] {
        &self.nodes
    }

    pub fn node(&self, i: PeerId) -> &N {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_online(&self, i: PeerId) -> bool {
        self.online[i]
    }

    pub fn log(&self) -> &[String] {
        &self.log
    }

    pub fn log_text(&self) -> String {
        let mut s = self.log.join("\n");
        s.push('\n');
        s
    }

    pub fn log_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for l in &self.log {
            h.update(l.as_bytes());
            h.update(b"\n");
        }
        h.finalize().into()
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    /// Packets sent but not yet delivered or dropped.
    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    /// No packets in flight and no node with outstanding work.
    pub fn quiet(&self) -> bool {
        self.in_flight == 0 && self.nodes.iter().enumerate().all(|(i, n)| !self.online[i] || !n.busy())
    }

    /// Adds a line to the event log, for scripted actions.
    pub fn note(&mut self, peer: PeerId, what: &str) {
        let line = format!("{} {} TIMER {}", self.now, self.nodes[peer].label(), what);
        self.log.push(line);
    }

    fn push(&mut self, at: u64, kind: Kind) {
        self.seq += 1;
        self.queue.push(Reverse(Event { at, seq: self.seq, kind }));
    }

    fn reschedule(&mut self, i: PeerId) {
        let Some(d) = self.nodes[i].next_deadline() else {
            return;
        };
        let d = d.max(self.now);
        if self.timer_at[i].is_some_and(|t| t <= d) {
            return;
        }
        self.timer_at[i] = Some(d);
        self.push(d, Kind::Timer { peer: i });
    }

    fn reachable(&self, a: PeerId, b: PeerId) -> bool {
        match &self.groups {
            Some(g) => g.get(a) == g.get(b),
            None => true,
        }
    }

    fn transmit(&mut self, from: PeerId, out: &mut Outbox) {
        let items: Vec<_> = out.drain().collect();
        for (dest, packet) in items {
            let name = packet.name().clone();
            let bytes = packet.encode();
            self.stats.sent += 1;
            self.log.push(format!("{} {} SEND {}", self.now, self.nodes[from].label(), name));
            let targets: Vec<PeerId> = match dest {
                Dest::All => (0..self.nodes.len()).filter(|&j| j != from).collect(),
                Dest::To(j) => vec![j],
            };
            for to in targets {
                let lost = self.cfg.loss > 0.0 && self.rng.gen_bool(self.cfg.loss.min(1.0));
                if lost || !self.online[from] || !self.reachable(from, to) {
                    self.stats.dropped += 1;
                    self.log.push(format!("{} {} DROP {}", self.now, self.nodes[to].label(), name));
                    continue;
                }
                let at = self.now + self.cfg.delay(from, to);
                self.in_flight += 1;
                self.push(
                    at,
                    Kind::Deliver {
                        to,
                        from,
                        bytes: bytes.clone(),
                        name: name.clone(),
                    },
                );
            }
        }
    }

    /// Runs `f` against node `i` at the current time and sends what it emits.
    pub fn with_node<R>(&mut self, i: PeerId, f: impl FnOnce(&mut N, u64, &mut Outbox) -> R) -> R {
        let mut out = Outbox::default();
        let r = f(&mut self.nodes[i], self.now, &mut out);
        self.transmit(i, &mut out);
        self.reschedule(i);
        r
    }

    /// Swaps in a new node, e.g. a peer rebuilt after a crash. Packets
    /// already in flight to `i` reach the new node.
    pub fn replace(&mut self, i: PeerId, node: N) -> N {
        let old = std::mem::replace(&mut self.nodes[i], node);
        self.timer_at[i] = None;
        self.reschedule(i);
        old
    }

    pub fn set_online(&mut self, i: PeerId, online: bool) {
        if self.online[i] == online {
            return;
        }
        self.online[i] = online;
        self.note(i, if online { "online" } else { "offline" });
        if online {
            self.with_node(i, |n, now, out| n.on_online(now, out));
        } else {
            let now = self.now;
            self.nodes[i].on_offline(now);
        }
    }

    /// Splits the peers into groups; packets only flow within a group.
    pub fn set_partition(&mut self, groups: Option<Vec<u32>>) {
        self.groups = groups;
    }

    /// Processes one event. Returns false if none is pending.
    pub fn step(&mut self) -> bool {
        let Some(Reverse(ev)) = self.queue.pop() else {
            return false;
        };
        debug_assert!(ev.at >= self.now);
        self.now = ev.at;
        match ev.kind {
            Kind::Deliver { to, from, bytes, name } => {
                self.in_flight -= 1;
                let label = self.nodes[to].label().to_string();
                if !self.online[to] {
                    self.stats.dropped += 1;
                    self.log.push(format!("{} {} DROP {}", self.now, label, name));
                    return true;
                }
                let Ok(packet) = Packet::decode(&bytes) else {
                    self.stats.dropped += 1;
                    self.log.push(format!("{} {} DROP {}", self.now, label, name));
                    return true;
                };
                self.stats.delivered += 1;
                self.log.push(format!("{} {} RECV {}", self.now, label, name));
                self.with_node(to, |n, now, out| n.on_packet(now, from, packet, out));
            }
            Kind::Timer { peer } => {
                if self.timer_at[peer] != Some(ev.at) {
                    return true;
                }
                self.timer_at[peer] = None;
                if !self.online[peer] {
                    return true;
                }
                if self.nodes[peer].next_deadline().is_some_and(|d| d <= self.now) {
                    let line = format!("{} {} TIMER -", self.now, self.nodes[peer].label());
                    self.log.push(line);
                    self.with_node(peer, |n, now, out| n.on_timer(now, out));
                } else {
                    self.reschedule(peer);
                }
            }
        }
        true
    }

    /// Processes every event up to and including `t`, then advances the
    /// clock to `t`.
    pub fn run_until(&mut self, t: u64) {
        while self.queue.peek().is_some_and(|Reverse(e)| e.at <= t) {
            self.step();
        }
        self.now = self.now.max(t);
        // Offline nodes skipped their timers; re-arm them for later.
        for i in 0..self.nodes.len() {
            if self.online[i] && self.timer_at[i].is_none() {
                self.reschedule(i);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::InterestPacket;

    /// Sends one Interest at start, records what it receives.
    struct Probe {
        label: String,
        send_at: Option<u64>,
        got: Vec<(u64, Name)>,
    }

    impl Node for Probe {
        fn label(&self) -> &str {
            &self.label
        }
        fn on_packet(&mut self, now: u64, _from: PeerId, p: Packet, _out: &mut Outbox) {
            self.got.push((now, p.name().clone()));
        }
        fn on_timer(&mut self, _now: u64, out: &mut Outbox) {
            self.send_at = None;
            out.multicast(InterestPacket::new(Name::parse("w/ping").unwrap()));
        }
        fn next_deadline(&self) -> Option<u64> {
            self.send_at
        }
    }

    fn probes(first_sends: bool, n: usize) -> Vec<Probe> {
        (0..n)
            .map(|i| Probe {
                label: format!("p{i}"),
                send_at: (i == 0 && first_sends).then_some(10),
                got: vec![],
            })
            .collect()
    }

    #[test]
    fn empty_network_has_no_events() {
        let mut net = SimNet::new(NetConfig::default(), probes(false, 3), 1);
        assert!(!net.step());
        net.run_until(1000);
        assert!(net.log().is_empty());
    }

    #[test]
    fn delivery_after_delay() {
        let mut net = SimNet::new(NetConfig::default(), probes(true, 2), 1);
        net.run_until(1000);
        assert_eq!(net.node(1).got, vec![(60, Name::parse("w/ping").unwrap())]);
        assert_eq!(net.log(), ["10 p0 TIMER -", "10 p0 SEND w/ping", "60 p1 RECV w/ping"]);
    }

    #[test]
    fn routers_double_delay() {
        let cfg = NetConfig {
            delay_ms: 25,
            loss: 0.0,
            routers: vec![0, 0, 1],
        };
        let mut net = SimNet::new(cfg, probes(true, 3), 1);
        net.run_until(1000);
        assert_eq!(net.node(1).got[0].0, 35);
        assert_eq!(net.node(2).got[0].0, 60);
    }

    #[test]
    fn total_loss_never_delivers() {
        let cfg = NetConfig {
            loss: 1.0,
            ..NetConfig::default()
        };
        let mut net = SimNet::new(cfg, probes(true, 4), 1);
        net.run_until(1000);
        assert!(net.nodes().iter().all(|n| n.got.is_empty()));
        assert_eq!(net.stats().dropped, 3);
    }

    #[test]
    fn partition_and_offline_drop() {
        let mut net = SimNet::new(NetConfig::default(), probes(true, 3), 1);
        net.set_partition(Some(vec![0, 0, 1]));
        net.set_online(1, false);
        net.run_until(1000);
        assert!(net.node(1).got.is_empty());
        assert!(net.node(2).got.is_empty());
        assert_eq!(net.stats().dropped, 2);
    }

    #[test]
    fn same_seed_same_log() {
        let run = |seed| {
            let cfg = NetConfig {
                loss: 0.5,
                ..NetConfig::default()
            };
            let mut net = SimNet::new(cfg, probes(true, 8), seed);
            net.run_until(1000);
            net.log_digest()
        };
        assert_eq!(run(7), run(7));
    }
}

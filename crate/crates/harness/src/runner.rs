//! Builds a simulated workspace from a scenario, drives it to quiescence and
//! reports on the outcome.

use crate::report::{AssertionResult, LatencyStats, RunReport};
use crate::scenario::{Assertion, Scenario, ScenarioError, ScriptOp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use thiserror::Error;
use wksp_core::membership::{bootstrap_member, create_workspace, MemberState, MembershipError, WorkspaceInstance};
use wksp_core::security::{issue_cert, self_sign, wot_authenticate, CertStore, Certificate, KeyPair, MembershipModel, DEFAULT_WOT_DEPTH};
use wksp_core::sim::{Delivery, Edit, NetConfig, PacketStore, Peer, PeerConfig, PeerId, SimNet};
use wksp_core::svs::SyncConfig;
use wksp_core::{Name, Validity};

/// Name of the metadata file written next to each peer's packets.
pub const WORKSPACE_META: &str = "workspace.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("setup failed: {0}")]
    Setup(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<MembershipError> for RunError {
    fn from(e: MembershipError) -> Self {
        RunError::Setup(e.to_string())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    pub log_path: Option<PathBuf>,
    /// Persist every peer's packets under `<dir>/<peer>/`.
    pub store_dir: Option<PathBuf>,
}

/// What `verify-store` needs to rebuild the trust schema for a store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkspaceMeta {
    pub workspace: String,
    /// Hex of the encoded root certificate, the trust anchor.
    pub root_cert: String,
    pub model: MembershipModel,
    pub initiator: String,
}

fn derive(seed: u64, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    h.finalize().into()
}

fn derive_u64(seed: u64, label: &str) -> u64 {
    u64::from_le_bytes(derive(seed, label)[..8].try_into().expect("8 bytes"))
}

fn parse_name(s: &str) -> Result<Name, RunError> {
    Name::parse(s).map_err(|e| RunError::Setup(format!("bad name {s:?}: {e}")))
}

#[derive(Debug, Clone)]
enum Action {
    Online(PeerId, bool),
    Partition(Option<Vec<u32>>),
    Kill(PeerId),
    Revive(PeerId),
    Step(usize),
    LoadCreate(PeerId),
    LoadAppend(PeerId),
}

/// A scenario wired up and ready to run.
pub struct World {
    pub scenario: Scenario,
    pub seed: u64,
    pub net: SimNet<Peer>,
    pub instance: WorkspaceInstance,
    index: BTreeMap<String, PeerId>,
    members: Vec<PeerId>,
    repo: Option<PeerId>,
    personal: BTreeMap<String, (KeyPair, Certificate)>,
    wot: CertStore,
    store_root: Option<PathBuf>,
    down: BTreeSet<PeerId>,
    wanted_online: Vec<bool>,
    pub_times: BTreeMap<(String, u64), (PeerId, u64)>,
    deliveries: Vec<(PeerId, Delivery)>,
    rejections: Vec<String>,
    violations: Vec<String>,
    rng: ChaCha8Rng,
    actions: Vec<(u64, Action)>,
}

fn online_at(intervals: &Option<Vec<(u64, Option<u64>)>>, t: u64) -> bool {
    match intervals {
        None => true,
        Some(v) => v.iter().any(|(a, b)| *a <= t && b.is_none_or(|b| t < b)),
    }
}

impl World {
    pub fn build(scenario: Scenario, opts: &RunOptions) -> Result<Self, RunError> {
        scenario.validate()?;
        let seed = opts.seed.unwrap_or(scenario.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ws = parse_name(&scenario.workspace.name)?;
        let root_ident = match &scenario.workspace.root {
            Some(r) => parse_name(r)?,
            None if ws.len() > 1 => ws.prefix(ws.len() - 1),
            None => parse_name("root")?,
        };
        let forever = Validity::new(0, u64::MAX).expect("ordered");
        let cert_err = |e: wksp_core::security::CertError| RunError::Setup(e.to_string());
        let root_key = KeyPair::from_seed(derive(seed, "root"));
        let root_cert = self_sign(&root_key, &root_ident, 1, forever).map_err(cert_err)?;
        let initiator = scenario.initiator().to_string();
        let instance = create_workspace(&ws, &root_key, &root_cert, scenario.workspace.model, &initiator, &mut rng)?;

        let mut personal = BTreeMap::new();
        for p in &scenario.peers {
            let k = KeyPair::from_seed(derive(seed, &format!("personal:{}", p.username)));
            let c = self_sign(&k, &parse_name(&p.username)?, 1, forever).map_err(cert_err)?;
            personal.insert(p.username.clone(), (k, c));
        }

        let mut states: BTreeMap<String, MemberState> = BTreeMap::new();
        states.insert(initiator.clone(), instance.initiator_state(&personal[&initiator].0, 0, u64::MAX)?);
        for inv in &scenario.invitations {
            let (key, cert) = &personal[&inv.invitee];
            let inviter = states.get_mut(&inv.inviter).expect("validated");
            let packet = inviter.create_invitation(cert, inv.lifetime_ms, 0, &mut rng)?;
            match states.get_mut(&inv.invitee) {
                Some(st) => {
                    st.accept(&packet, 0)?;
                }
                None => {
                    let st = bootstrap_member(&inv.invitee, key, &packet, &root_cert, 0)?;
                    states.insert(inv.invitee.clone(), st);
                }
            }
        }

        let mut wot = CertStore::new();
        for (_, c) in personal.values() {
            wot.insert(c.clone());
        }
        for (issuer, subject) in &scenario.trust_edges {
            let (ik, ic) = &personal[issuer];
            let (_, sc) = &personal[subject];
            let c = issue_cert(ik, ic.name(), sc.public_key(), &sc.identity(), 1, forever).map_err(cert_err)?;
            wot.insert(c);
        }

        let settings = &scenario.settings;
        let sync = SyncConfig {
            steady_interval_ms: settings.steady_interval_ms,
            suppression_max_ms: settings.suppression_ms,
            ..SyncConfig::default()
        };
        let peer_cfg = |label: &str| PeerConfig {
            sync: sync.clone(),
            coalesce_ms: settings.coalesce_ms,
            max_payload: settings.max_payload,
            piggyback: settings.piggyback,
            seed: derive_u64(seed, &format!("peer:{label}")),
        };
        let meta = WorkspaceMeta {
            workspace: ws.to_uri(),
            root_cert: hex::encode(root_cert.encode()),
            model: scenario.workspace.model,
            initiator: initiator.clone(),
        };
        let open_store = |label: &str| -> Result<PacketStore, RunError> {
            match &opts.store_dir {
                Some(root) => {
                    let dir = root.join(label);
                    let s = PacketStore::open(&dir)?;
                    std::fs::write(dir.join(WORKSPACE_META), serde_json::to_vec_pretty(&meta).expect("serializable"))?;
                    Ok(s)
                }
                None => Ok(PacketStore::in_memory()),
            }
        };

        let mut nodes = Vec::new();
        let mut index = BTreeMap::new();
        let mut routers = Vec::new();
        for p in &scenario.peers {
            let st = states.remove(&p.username).expect("validated: everyone is invited");
            let peer = Peer::member(st, open_store(&p.username)?, peer_cfg(&p.username), 0).map_err(|e| RunError::Setup(e.to_string()))?;
            index.insert(p.username.clone(), nodes.len());
            routers.push(p.router);
            nodes.push(peer);
        }
        let members: Vec<PeerId> = (0..nodes.len()).collect();
        let repo = if scenario.repo {
            let r = Peer::repo("repo", &ws, instance.schema.clone(), root_cert.clone(), open_store("repo")?, peer_cfg("repo"), 0);
            index.insert("repo".into(), nodes.len());
            routers.push(scenario.links.repo_router);
            nodes.push(r);
            Some(nodes.len() - 1)
        } else {
            None
        };
        let net_cfg = NetConfig {
            delay_ms: scenario.links.delay_ms,
            loss: scenario.links.loss,
            routers,
        };
        let mut net = SimNet::new(net_cfg, nodes, derive_u64(seed, "net"));
        let mut wanted_online = vec![true; net.len()];
        for p in &scenario.peers {
            let i = index[&p.username];
            if !online_at(&p.online, 0) {
                wanted_online[i] = false;
                net.set_online(i, false);
            }
        }

        let mut world = Self {
            seed,
            net,
            instance,
            index,
            members,
            repo,
            personal,
            wot,
            store_root: opts.store_dir.clone(),
            down: BTreeSet::new(),
            wanted_online,
            pub_times: BTreeMap::new(),
            deliveries: Vec::new(),
            rejections: Vec::new(),
            violations: Vec::new(),
            rng,
            actions: Vec::new(),
            scenario,
        };
        world.plan();
        Ok(world)
    }

    fn plan(&mut self) {
        let s = &self.scenario;
        let mut acts: Vec<(u64, Action)> = Vec::new();
        for p in &s.peers {
            let i = self.index[&p.username];
            for (a, b) in p.online.iter().flatten() {
                if *a > 0 {
                    acts.push((*a, Action::Online(i, true)));
                }
                if let Some(b) = b {
                    acts.push((*b, Action::Online(i, false)));
                }
            }
        }
        for part in &s.partitions {
            let mut groups = vec![0u32; self.net.len()];
            for (g, names) in part.groups.iter().enumerate() {
                for n in names {
                    groups[self.index[n]] = g as u32;
                }
            }
            acts.push((part.from_ms, Action::Partition(Some(groups))));
            acts.push((part.to_ms, Action::Partition(None)));
        }
        for r in &s.restarts {
            let i = self.index[&r.peer];
            acts.push((r.at_ms, Action::Kill(i)));
            acts.push((r.at_ms + r.down_ms, Action::Revive(i)));
        }
        for (k, step) in s.script.iter().enumerate() {
            acts.push((step.t, Action::Step(k)));
        }
        if let Some(load) = &s.load {
            let pubs: Vec<PeerId> = match &load.publishers {
                Some(v) => v.iter().map(|n| self.index[n]).collect(),
                None => self.members.clone(),
            };
            for i in pubs {
                acts.push((load.start_ms, Action::LoadCreate(i)));
                let phase = self.rng.gen_range(0..load.interval_ms);
                let mut t = load.start_ms + phase;
                while t < load.start_ms + load.duration_ms {
                    acts.push((t, Action::LoadAppend(i)));
                    t += load.interval_ms;
                }
            }
        }
        acts.sort_by_key(|(t, _)| *t);
        self.actions = acts;
    }

    pub fn peer_index(&self, name: &str) -> Option<PeerId> {
        self.index.get(name).copied()
    }

    pub fn peer(&self, name: &str) -> Option<&Peer> {
        self.peer_index(name).map(|i| self.net.node(i))
    }

    fn label(&self, i: PeerId) -> String {
        self.net.node(i).label().to_string()
    }

    /// 1-based number of the last log line mentioning `label`.
    fn cite(&self, label: &str) -> String {
        let needle = format!(" {label} ");
        let line = self
            .net
            .log()
            .iter()
            .rposition(|l| l.contains(&needle))
            .map_or(self.net.log().len(), |i| i + 1);
        format!("event log line {line}")
    }

    fn harvest(&mut self, i: PeerId) {
        let p = self.net.node(i);
        for &(seq, t) in p.published() {
            self.pub_times.insert((p.label().to_string(), seq), (i, t));
        }
        self.deliveries.extend(p.deliveries().iter().map(|d| (i, d.clone())));
        for r in p.rejections() {
            self.rejections.push(format!("{} {} rejected {}: {}", r.at, p.label(), r.name, r.reason));
        }
    }

    fn violation(&mut self, i: PeerId, what: String) {
        let label = self.label(i);
        let v = format!("{} {}: {} ({})", self.net.now(), label, what, self.cite(&label));
        self.violations.push(v);
    }

    fn edit(&mut self, i: PeerId, e: Edit) {
        if self.down.contains(&i) {
            return self.violation(i, "edit while crashed".into());
        }
        let label = self.label(i);
        self.net.note(i, &format!("edit:{}", edit_kind(&e)));
        if let Err(err) = self.net.with_node(i, |p, now, out| p.edit(now, &e, out)) {
            let _ = label;
            self.violation(i, format!("edit failed: {err}"));
        }
    }

    fn text_len(&self, i: PeerId, path: &str) -> Option<usize> {
        self.net.node(i).doc().and_then(|d| d.text_len(path))
    }

    fn random_text(&mut self, n: usize) -> String {
        (0..n).map(|_| self.rng.gen_range(b'a'..=b'z') as char).collect()
    }

    fn apply(&mut self, action: Action) -> Result<(), RunError> {
        match action {
            Action::Online(i, on) => {
                self.wanted_online[i] = on;
                if !self.down.contains(&i) {
                    self.net.set_online(i, on);
                }
            }
            Action::Partition(groups) => {
                let what = if groups.is_some() { "partition" } else { "heal" };
                self.net.note(0, what);
                self.net.set_partition(groups);
            }
            Action::Kill(i) => {
                self.harvest(i);
                self.net.note(i, "crash");
                self.net.set_online(i, false);
                self.down.insert(i);
            }
            Action::Revive(i) => {
                let old = self.net.node(i);
                let state = old.member_state().cloned().expect("only members restart");
                let store = match &self.store_root {
                    Some(root) => PacketStore::open(root.join(old.label()))?,
                    None => old.store().clone(),
                };
                let cfg = old.config().clone();
                let now = self.net.now();
                let fresh = Peer::member(state, store, cfg, now).map_err(|e| RunError::Setup(e.to_string()))?;
                self.net.replace(i, fresh);
                self.down.remove(&i);
                self.net.note(i, "restart");
                if self.wanted_online[i] {
                    self.net.set_online(i, true);
                }
            }
            Action::Step(k) => {
                let step = self.scenario.script[k].clone();
                let i = self.index[&step.peer];
                let edit = match step.op {
                    ScriptOp::CreateFolder { path } => Edit::CreateFolder(path),
                    ScriptOp::CreateText { path } => Edit::CreateText(path),
                    ScriptOp::Insert { path, pos, text } => Edit::Insert { path, pos, text },
                    ScriptOp::Append { path, text } => match self.text_len(i, &path) {
                        Some(pos) => Edit::Insert { path, pos, text },
                        None => {
                            self.violation(i, format!("append to missing text {path}"));
                            return Ok(());
                        }
                    },
                    ScriptOp::Delete { path, pos, count } => Edit::Delete { path, pos, count },
                    ScriptOp::Remove { path } => Edit::Remove(path),
                    ScriptOp::Attach { path, size } => {
                        let bytes = (0..size).map(|_| self.rng.gen()).collect();
                        Edit::Attach { path, bytes }
                    }
                    ScriptOp::Renew { invitee, lifetime_ms } => {
                        let j = self.index[&invitee];
                        self.net.note(i, &format!("renew:{invitee}"));
                        let inv = self.net.with_node(i, |p, now, _| p.renew(&invitee, lifetime_ms, now));
                        match inv.and_then(|inv| self.net.with_node(j, |p, now, _| p.accept_invitation(&inv, now))) {
                            Ok(_) => {}
                            Err(e) => self.violation(i, format!("renewal failed: {e}")),
                        }
                        return Ok(());
                    }
                    ScriptOp::Flush => {
                        if let Err(e) = self.net.with_node(i, |p, now, out| p.flush(now, out)) {
                            self.violation(i, format!("flush failed: {e}"));
                        }
                        return Ok(());
                    }
                };
                self.edit(i, edit);
            }
            Action::LoadCreate(i) => {
                let path = format!("{}.txt", self.label(i));
                self.edit(i, Edit::CreateText(path));
            }
            Action::LoadAppend(i) => {
                let path = format!("{}.txt", self.label(i));
                let n = self.scenario.load.as_ref().map_or(100, |l| l.payload_bytes);
                let text = self.random_text(n);
                match self.text_len(i, &path) {
                    Some(pos) => self.edit(i, Edit::Insert { path, pos, text }),
                    None => self.violation(i, format!("load file {path} missing")),
                }
            }
        }
        Ok(())
    }

    /// Executes the whole scenario, then waits for quiescence plus a grace
    /// period of two steady sync intervals.
    pub fn run(&mut self) -> Result<(), RunError> {
        self.run_script()?;
        self.settle();
        Ok(())
    }

    /// Applies every scheduled action, leaving the clock at the last one.
    pub fn run_script(&mut self) -> Result<(), RunError> {
        let actions = std::mem::take(&mut self.actions);
        for (t, a) in actions {
            self.net.run_until(t);
            self.apply(a)?;
        }
        Ok(())
    }

    pub fn settle(&mut self) {
        let cap = self.net.now() + self.scenario.settings.settle_limit_ms;
        while !self.net.quiet() && self.net.now() < cap {
            let next = (self.net.now() + 1000).min(cap);
            self.net.run_until(next);
        }
        let grace = 2 * self.scenario.settings.steady_interval_ms;
        self.net.run_until(self.net.now() + grace);
    }

    /// Every active member has delivered every publication made so far.
    pub fn fully_synced(&self) -> bool {
        let mut all: BTreeSet<(String, u64)> = self.pub_times.keys().cloned().collect();
        for &i in &self.members {
            let p = self.net.node(i);
            all.extend(p.published().iter().map(|&(s, _)| (p.label().to_string(), s)));
        }
        self.members.iter().filter(|&&i| self.active(i)).all(|&i| {
            let p = self.net.node(i);
            all.iter().all(|(u, s)| u == p.label() || p.sync().is_delivered(u, *s))
        })
    }

    /// Advances in one-second steps until [`World::fully_synced`] holds and
    /// active documents agree, or `deadline` passes. Returns the time it
    /// first held.
    pub fn run_until_synced(&mut self, deadline: u64) -> Option<u64> {
        loop {
            if self.fully_synced() && self.active_digests_agree() {
                return Some(self.net.now());
            }
            if self.net.now() >= deadline {
                return None;
            }
            let next = (self.net.now() + 1000).min(deadline);
            self.net.run_until(next);
        }
    }

    fn active_digests_agree(&self) -> bool {
        let ds: BTreeSet<String> = self.members.iter().filter(|&&i| self.active(i)).filter_map(|&i| self.digest_of(i)).collect();
        ds.len() <= 1
    }

    fn digest_of(&self, i: PeerId) -> Option<String> {
        self.net.node(i).doc().map(|d| hex::encode(d.digest()))
    }

    fn active(&self, i: PeerId) -> bool {
        let now = self.net.now();
        !self.down.contains(&i)
            && self.net.is_online(i)
            && self.net.node(i).member_state().is_some_and(|m| m.is_active(now))
    }

    fn check(&self, a: &Assertion, digests: &BTreeMap<String, String>, converged: bool) -> AssertionResult {
        let (check, passed, detail) = match a {
            Assertion::Converged => {
                let detail = if converged {
                    "all active members agree".to_string()
                } else {
                    format!("digests differ: {digests:?}; {}", self.cite(""))
                };
                ("converged".to_string(), converged, detail)
            }
            Assertion::ConvergedAmong { peers } => {
                let ds: BTreeSet<Option<&String>> = peers.iter().map(|p| digests.get(p)).collect();
                let ok = ds.len() <= 1 && !ds.contains(&None);
                let detail = if ok {
                    format!("{} peers agree", peers.len())
                } else {
                    let last = peers.last().map(String::as_str).unwrap_or_default();
                    format!("digests differ among {peers:?}; {}", self.cite(last))
                };
                (format!("converged_among {}", peers.join(",")), ok, detail)
            }
            Assertion::TextEquals { path, value, peers } => {
                let targets: Vec<PeerId> = match peers {
                    Some(v) => v.iter().map(|p| self.index[p]).collect(),
                    None => self.members.iter().copied().filter(|&i| self.active(i)).collect(),
                };
                let mut bad = Vec::new();
                for i in targets {
                    let got = self.net.node(i).doc().and_then(|d| d.text(path));
                    if got.as_deref() != Some(value.as_str()) {
                        bad.push(format!("{} has {:?} ({})", self.label(i), got, self.cite(&self.label(i))));
                    }
                }
                (format!("text_equals {path}"), bad.is_empty(), if bad.is_empty() { "ok".into() } else { bad.join("; ") })
            }
            Assertion::Delivered { peer, from, seq } | Assertion::NotDelivered { peer, from, seq } => {
                let want = matches!(a, Assertion::Delivered { .. });
                let got = self.net.node(self.index[peer]).sync().is_delivered(from, *seq);
                let name = if want { "delivered" } else { "not_delivered" };
                (
                    format!("{name} {peer} <- {from}#{seq}"),
                    got == want,
                    format!("delivered={got}; {}", self.cite(peer)),
                )
            }
            Assertion::Rejected { peer, from } => {
                let i = self.index[peer];
                let prefix = self.net.node(i).workspace().child(from.as_str());
                let n = self.net.node(i).rejections().iter().filter(|r| prefix.is_prefix_of(&r.name)).count();
                (format!("rejected {peer} <- {from}"), n > 0, format!("{n} rejections; {}", self.cite(peer)))
            }
            Assertion::NoViolations => {
                let mut all = self.violations.clone();
                all.extend(self.rejections.iter().cloned());
                let detail = if all.is_empty() { "none".to_string() } else { all.join("; ") };
                ("no_violations".to_string(), all.is_empty(), detail)
            }
            Assertion::WotChain { truster, subject, max_chain } => {
                let me = self.personal[truster].1.identity();
                let roots: BTreeSet<Name> = self
                    .wot
                    .iter()
                    .filter(|c| wksp_core::security::cert::identity_of(c.key_locator()).is_some_and(|i| i == me))
                    .map(|c| c.name().clone())
                    .collect();
                let ident = self.personal[subject].1.identity();
                let best = self
                    .wot
                    .by_identity(&ident)
                    .filter_map(|c| wot_authenticate(c, &roots, &self.wot, DEFAULT_WOT_DEPTH))
                    .map(|chain| chain.len())
                    .min();
                let ok = best.is_some_and(|n| n <= *max_chain);
                (format!("wot_chain {truster} -> {subject}"), ok, format!("shortest chain {best:?}"))
            }
        };
        AssertionResult { check, passed, detail }
    }

    pub fn report(&mut self, opts: &RunOptions) -> Result<RunReport, RunError> {
        for i in 0..self.net.len() {
            if !self.down.contains(&i) {
                self.harvest(i);
            }
        }
        let mut digests = BTreeMap::new();
        for &i in &self.members {
            if let Some(d) = self.digest_of(i) {
                digests.insert(self.label(i), d);
            }
        }
        let active: Vec<PeerId> = self.members.iter().copied().filter(|&i| self.active(i)).collect();
        let active_digests: BTreeSet<&String> = active.iter().filter_map(|i| digests.get(&self.label(*i))).collect();
        let converged = active_digests.len() <= 1;

        let mut samples = Vec::new();
        for (recv, d) in &self.deliveries {
            if Some(*recv) == self.repo {
                continue;
            }
            if let Some(&(publisher, t)) = self.pub_times.get(&(d.user.clone(), d.seq)) {
                samples.push((d.at.saturating_sub(t), self.net.config().delay(publisher, *recv)));
            }
        }
        let mut violations = self.violations.clone();
        violations.extend(self.rejections.iter().cloned());
        let assertions = self.scenario.assertions.iter().map(|a| self.check(a, &digests, converged)).collect();
        if let Some(path) = &opts.log_path {
            std::fs::write(path, self.net.log_text())?;
        }
        let stats = self.net.stats();
        Ok(RunReport {
            scenario: self.scenario.name.clone(),
            seed: self.seed,
            converged,
            active_peers: active.iter().map(|&i| self.label(i)).collect(),
            digests,
            latency: LatencyStats::from_samples(&samples),
            latency_samples_ms: samples.iter().map(|s| s.0).collect(),
            publications: self.pub_times.len(),
            deliveries: samples.len(),
            violations,
            assertions,
            end_time_ms: self.net.now(),
            packets_sent: stats.sent,
            packets_dropped: stats.dropped,
            log_lines: self.net.log().len(),
            log_digest: hex::encode(self.net.log_digest()),
            event_log_path: opts.log_path.as_ref().map(|p| p.display().to_string()),
        })
    }
}

fn edit_kind(e: &Edit) -> &'static str {
    match e {
        Edit::CreateFolder(_) => "create_folder",
        Edit::CreateText(_) => "create_text",
        Edit::Insert { .. } => "insert",
        Edit::Delete { .. } => "delete",
        Edit::Remove(_) => "remove",
        Edit::Attach { .. } => "attach",
    }
}

/// Builds, runs and reports in one go.
pub fn run_scenario(scenario: Scenario, opts: &RunOptions) -> Result<(RunReport, World), RunError> {
    let mut w = World::build(scenario, opts)?;
    w.run()?;
    let r = w.report(opts)?;
    Ok((r, w))
}

pub fn run_scenario_file(path: &Path, opts: &RunOptions) -> Result<RunReport, RunError> {
    let s = Scenario::load(path)?;
    Ok(run_scenario(s, opts)?.0)
}

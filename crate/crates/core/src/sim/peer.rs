use super::net::{Node, Outbox, PeerId};
use super::store::PacketStore;
use crate::crdt::{self, BlobRef, Delta, Doc, DocError, Op, PublishError, Publisher};
use crate::membership::{MemberState, MembershipError};
use crate::name::{self, Name, KEY};
use crate::packet::{ContentType, DataPacket, InterestPacket, Packet, DEFAULT_MAX_PAYLOAD};
use crate::security::{Certificate, CertStore, TrustSchema, ValidationError, Validator};
use crate::svs::{Comparison, SyncConfig, SyncEngine, SyncOutput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

/// Minimum spacing between two replays of the repo's vector.
pub const REPO_REPLAY_INTERVAL_MS: u64 = 200;
const MAX_OBJECT_ATTEMPTS: u32 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct PeerConfig {
    pub sync: SyncConfig,
    /// Local edits within this window go out as one publication.
    pub coalesce_ms: u64,
    pub max_payload: usize,
    /// Carry new publications inside the Sync Interest that announces them.
    pub piggyback: bool,
    pub seed: u64,
}

impl Default for PeerConfig {
    fn default() -> Self {
        Self {
            sync: SyncConfig::default(),
            coalesce_ms: 500,
            max_payload: DEFAULT_MAX_PAYLOAD,
            piggyback: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Edit {
    CreateFolder(String),
    CreateText(String),
    Insert { path: String, pos: usize, text: String },
    Delete { path: String, pos: usize, count: usize },
    Remove(String),
    /// A binary file, stored as a segmented blob.
    Attach { path: String, bytes: Vec<u8> },
}

#[derive(Debug, Error)]
pub enum PeerError {
    #[error("a repo holds no document")]
    NotAMember,
    #[error(transparent)]
    Doc(#[from] DocError),
    #[error(transparent)]
    Publish(#[from] PublishError),
    #[error(transparent)]
    Membership(#[from] MembershipError),
    #[error("store: {0}")]
    Io(#[from] std::io::Error),
}

/// A remote publication applied locally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub user: String,
    pub seq: u64,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub name: Name,
    pub reason: String,
    pub at: u64,
}

#[derive(Debug)]
struct Member {
    state: MemberState,
    doc: Doc,
    publisher: Publisher,
    batch: Option<(Delta, u64)>,
    chain_announced: bool,
}

#[derive(Debug)]
enum Role {
    Member(Box<Member>),
    Repo { replay_at: Option<u64>, last_replay: Option<u64> },
}

#[derive(Debug, Clone, Copy)]
struct Retry {
    next_at: u64,
    backoff: u64,
    attempts: u32,
}

/// A workspace participant: either a member with a document, or a repo
/// that stores and serves every publication without being able to read it.
#[derive(Debug)]
pub struct Peer {
    label: String,
    role: Role,
    workspace: Name,
    group: Name,
    cfg: PeerConfig,
    validator: Validator,
    certs: CertStore,
    store: PacketStore,
    sync: SyncEngine,
    rng: ChaCha8Rng,
    /// Packets waiting for the named certificate.
    waiting: BTreeMap<Name, Vec<DataPacket>>,
    /// Certificates and blob segments being fetched.
    wanted: BTreeMap<Name, Retry>,
    /// Segmented publications whose segments are still arriving.
    blobs: BTreeMap<(String, u64), BlobRef>,
    deliveries: Vec<Delivery>,
    published: Vec<(u64, u64)>,
    rejections: Vec<Rejection>,
    replaying: bool,
}

fn is_cert_name(n: &Name) -> bool {
    n.components().iter().any(|c| c.as_bytes() == KEY.as_bytes())
}

impl Peer {
    #[allow(clippy::too_many_arguments)]
    fn base(label: String, role: Role, workspace: Name, validator: Validator, certs: CertStore, store: PacketStore, cfg: PeerConfig, now: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let me = match &role {
            Role::Member(m) => Some(m.state.username.clone()),
            Role::Repo { .. } => None,
        };
        let sync = SyncEngine::new(me.as_deref(), cfg.sync.clone(), now, &mut rng);
        Self {
            label,
            role,
            group: name::sync_group_name(&workspace),
            workspace,
            cfg,
            validator,
            certs,
            store,
            sync,
            rng,
            waiting: BTreeMap::new(),
            wanted: BTreeMap::new(),
            blobs: BTreeMap::new(),
            deliveries: Vec::new(),
            published: Vec::new(),
            rejections: Vec::new(),
            replaying: false,
        }
    }

    /// A member peer. Whatever `store` already holds (after a restart) is
    /// revalidated and replayed into a fresh document.
    pub fn member(state: MemberState, store: PacketStore, cfg: PeerConfig, now: u64) -> Result<Self, PeerError> {
        let member = Member {
            doc: Doc::new(state.username.clone()),
            publisher: Publisher::new(cfg.max_payload),
            batch: None,
            chain_announced: false,
            state,
        };
        let label = member.state.username.clone();
        let ws = member.state.workspace.clone();
        let validator = member.state.validator();
        let certs = member.state.cert_store();
        let mut p = Self::base(label, Role::Member(Box::new(member)), ws, validator, certs, store, cfg, now);
        p.store_own_chain()?;
        p.replay_store(now);
        Ok(p)
    }

    /// A repo for `workspace`, trusting `anchor` under `schema`.
    pub fn repo(label: impl Into<String>, workspace: &Name, schema: TrustSchema, anchor: Certificate, store: PacketStore, cfg: PeerConfig, now: u64) -> Self {
        let mut certs = CertStore::new();
        certs.add_anchor(anchor);
        let role = Role::Repo {
            replay_at: None,
            last_replay: None,
        };
        let mut p = Self::base(label.into(), role, workspace.clone(), Validator::new(schema), certs, store, cfg, now);
        p.replay_store(now);
        p
    }

    fn store_own_chain(&mut self) -> Result<(), PeerError> {
        if let Role::Member(m) = &self.role {
            let mut chain: Vec<DataPacket> = m.state.cert_chain().iter().map(|c| c.packet().clone()).collect();
            chain.push(m.state.anchor.packet().clone());
            for c in &chain {
                self.store.insert(c)?;
            }
            for c in m.state.cert_chain() {
                self.certs.insert(c);
            }
        }
        Ok(())
    }

    fn replay_store(&mut self, now: u64) {
        let mut packets: Vec<DataPacket> = self.store.iter().cloned().collect();
        // Certificates, then segments, then publications in sequence order.
        let rank = |p: &DataPacket| {
            if is_cert_name(&p.name) {
                0
            } else if p.content_type == ContentType::Blob && name::parse_data_name(&self.workspace, &p.name).is_none() {
                1
            } else {
                2
            }
        };
        packets.sort_by(|a, b| rank(a).cmp(&rank(b)).then_with(|| super::store::version_cmp(&a.name, &b.name)));
        self.replaying = true;
        for p in packets {
            if is_cert_name(&p.name) {
                if let Ok(c) = Certificate::from_packet(p) {
                    if !self.certs.is_anchor(c.name()) {
                        self.certs.insert(c);
                    }
                }
            } else {
                self.ingest(p, now, true);
            }
        }
        self.replaying = false;
        if let Role::Member(m) = &mut self.role {
            let me = &m.state.username;
            let own = name::make_blob_name(&self.workspace, me, 1).map(|n| n.prefix(n.len() - 1)).ok();
            for p in self.store.iter() {
                if let Some(prefix) = &own {
                    if prefix.is_prefix_of(&p.name) {
                        if let Some(v) = p.name.get(prefix.len()).and_then(|c| c.typed_number("v")) {
                            m.publisher.observe_blob_version(v);
                        }
                    }
                }
            }
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_repo(&self) -> bool {
        matches!(self.role, Role::Repo { .. })
    }

    pub fn workspace(&self) -> &Name {
        &self.workspace
    }

    pub fn doc(&self) -> Option<&Doc> {
        match &self.role {
            Role::Member(m) => Some(&m.doc),
            Role::Repo { .. } => None,
        }
    }

    pub fn member_state(&self) -> Option<&MemberState> {
        match &self.role {
            Role::Member(m) => Some(&m.state),
            Role::Repo { .. } => None,
        }
    }

    pub fn store(&self) -> &PacketStore {
        &self.store
    }

    pub fn sync(&self) -> &SyncEngine {
        &self.sync
    }

    pub fn deliveries(&self) -> &[Delivery] {
        &self.deliveries
    }

    /// Own publications as `(seq, time)`.
    pub fn published(&self) -> &[(u64, u64)] {
        &self.published
    }

    pub fn rejections(&self) -> &[Rejection] {
        &self.rejections
    }

    pub fn config(&self) -> &PeerConfig {
        &self.cfg
    }

    fn member_mut(&mut self) -> Result<&mut Member, PeerError> {
        match &mut self.role {
            Role::Member(m) => Ok(m),
            Role::Repo { .. } => Err(PeerError::NotAMember),
        }
    }

    /// Applies a local edit. It is published when the coalescing window
    /// closes.
    pub fn edit(&mut self, now: u64, edit: &Edit, out: &mut Outbox) -> Result<(), PeerError> {
        let coalesce = self.cfg.coalesce_ms;
        let m = match &mut self.role {
            Role::Member(m) => m,
            Role::Repo { .. } => return Err(PeerError::NotAMember),
        };
        let delta = match edit {
            Edit::CreateFolder(p) => m.doc.create_folder(p)?,
            Edit::CreateText(p) => m.doc.create_text(p)?,
            Edit::Insert { path, pos, text } => m.doc.local_insert(path, *pos, text)?,
            Edit::Delete { path, pos, count } => m.doc.local_delete(path, *pos, *count)?,
            Edit::Remove(p) => m.doc.remove(p)?,
            Edit::Attach { path, bytes } => {
                let (blob, segments) = m.publisher.encode_blob(bytes, &m.state, now, &mut self.rng)?;
                for s in &segments {
                    self.store.insert(s)?;
                }
                m.doc.attach_blob(path, blob)?
            }
        };
        if delta.is_empty() {
            return Ok(());
        }
        match &mut m.batch {
            Some((b, _)) => b.extend(delta),
            None => m.batch = Some((delta, now + coalesce)),
        }
        if coalesce == 0 {
            self.flush(now, out)?;
        }
        Ok(())
    }

    /// Publishes the pending batch now.
    pub fn flush(&mut self, now: u64, out: &mut Outbox) -> Result<(), PeerError> {
        let m = match &mut self.role {
            Role::Member(m) => m,
            Role::Repo { .. } => return Err(PeerError::NotAMember),
        };
        let Some((mut delta, _)) = m.batch.take() else {
            return Ok(());
        };
        let seq = self.sync.on_local_publish(now, &mut self.rng);
        delta.source = m.state.username.clone();
        delta.seq = seq;
        let packets = m.publisher.encode_delta(&delta, &m.state, now, &mut self.rng)?;
        for p in &packets {
            self.store.insert(p)?;
        }
        self.published.push((seq, now));
        let mut piggyback = Vec::new();
        if self.cfg.piggyback {
            if !m.chain_announced {
                piggyback.extend(m.state.cert_chain().iter().map(|c| c.packet().clone()));
                m.chain_announced = true;
            }
            piggyback.push(packets.last().expect("at least one packet").clone());
        }
        out.multicast(self.sync.payload(piggyback).to_interest(&self.group));
        Ok(())
    }

    /// Takes in a renewal or other further invitation for this member.
    pub fn accept_invitation(&mut self, invitation: &DataPacket, now: u64) -> Result<bool, PeerError> {
        let m = self.member_mut()?;
        let changed = m.state.accept(invitation, now)?;
        if changed {
            m.chain_announced = false;
            self.store_own_chain()?;
        }
        Ok(changed)
    }

    /// Issues an invitation for the holder of `invitee` (their personal
    /// certificate).
    pub fn invite(&mut self, invitee: &Certificate, lifetime: u64, now: u64) -> Result<DataPacket, PeerError> {
        let m = match &mut self.role {
            Role::Member(m) => m,
            Role::Repo { .. } => return Err(PeerError::NotAMember),
        };
        let inv = m.state.create_invitation(invitee, lifetime, now, &mut self.rng)?;
        self.store.insert(&inv)?;
        Ok(inv)
    }

    /// A fresh invitation for an existing member.
    pub fn renew(&mut self, user: &str, lifetime: u64, now: u64) -> Result<DataPacket, PeerError> {
        let m = match &mut self.role {
            Role::Member(m) => m,
            Role::Repo { .. } => return Err(PeerError::NotAMember),
        };
        let inv = m.state.renew_invitation(user, lifetime, now, &mut self.rng)?;
        self.store.insert(&inv)?;
        Ok(inv)
    }

    /// Queues a fetch. Asking again for something already queued restarts
    /// its backoff: the caller just heard from a peer that likely has it,
    /// so a long wait left over from an outage is no longer warranted.
    fn want(&mut self, name: Name, now: u64) {
        let base = self.cfg.sync.retry_base_ms;
        let r = self.wanted.entry(name).or_insert(Retry {
            next_at: now,
            backoff: base,
            attempts: 0,
        });
        if r.next_at > now + base {
            *r = Retry {
                next_at: now,
                backoff: base,
                attempts: 0,
            };
        }
    }

    fn reject(&mut self, name: &Name, reason: String, now: u64) {
        self.rejections.push(Rejection {
            name: name.clone(),
            reason,
            at: now,
        });
        if let Some((user, seq)) = name::parse_data_name(&self.workspace, name) {
            self.sync.on_validation_failure(&user, seq);
        }
    }

    /// Validates, stores and applies one incoming Data packet.
    fn ingest(&mut self, p: DataPacket, now: u64, replay: bool) {
        if !replay && self.store.contains(&p.name) {
            return;
        }
        if is_cert_name(&p.name) {
            self.wanted.remove(&p.name);
            if !self.certs.contains(&p.name) {
                if let Ok(c) = Certificate::from_packet(p.clone()) {
                    self.certs.insert(c);
                }
            }
            if let Some(parked) = self.waiting.remove(&p.name) {
                for q in parked {
                    self.ingest(q, now, false);
                }
            }
            return;
        }
        let data = name::parse_data_name(&self.workspace, &p.name);
        let segment = data.is_none() && self.workspace.is_prefix_of(&p.name) && p.name.components().iter().any(|c| c.as_bytes() == name::BLOB.as_bytes());
        if data.is_none() && !segment {
            return;
        }
        match self.validator.validate(&mut self.certs, &p, now) {
            Err(ValidationError::MissingCert(c)) => {
                if let Some((u, s)) = &data {
                    self.sync.defer(u, *s, now + self.cfg.sync.retry_base_ms * 2);
                }
                let list = self.waiting.entry(c.clone()).or_default();
                if !list.iter().any(|q| q.name == p.name) {
                    list.push(p);
                }
                self.want(c, now);
            }
            Err(e) => self.reject(&p.name, e.to_string(), now),
            Ok(chain) => {
                for c in chain {
                    if let Some(cert) = self.certs.get(&c) {
                        let _ = self.store.insert(cert.packet());
                    }
                }
                // Store failures only cost durability; the packet still counts.
                let _ = self.store.insert(&p);
                self.wanted.remove(&p.name);
                if let Some((user, seq)) = data {
                    match p.content_type {
                        ContentType::Link => match crdt::pointer_target(&p) {
                            Some(blob) => {
                                for i in 0..blob.segments {
                                    let n = crdt::segment_name(&blob, i);
                                    if !self.store.contains(&n) {
                                        self.want(n, now);
                                    }
                                }
                                self.blobs.insert((user.clone(), seq), blob);
                                self.try_complete(&user, seq, now);
                            }
                            None => self.reject(&p.name, "malformed blob pointer".into(), now),
                        },
                        ContentType::Blob => self.deliver(&user, seq, &[p], now),
                        _ => self.reject(&p.name, "unexpected content type".into(), now),
                    }
                } else {
                    let waiting: Vec<(String, u64)> = self
                        .blobs
                        .iter()
                        .filter(|(_, b)| b.name.is_prefix_of(&p.name))
                        .map(|(k, _)| k.clone())
                        .collect();
                    for (u, s) in waiting {
                        self.try_complete(&u, s, now);
                    }
                }
            }
        }
    }

    fn try_complete(&mut self, user: &str, seq: u64, now: u64) {
        let key = (user.to_string(), seq);
        let Some(blob) = self.blobs.get(&key) else {
            return;
        };
        let mut packets = Vec::new();
        for i in 0..blob.segments {
            match self.store.get(&crdt::segment_name(blob, i)) {
                Some(p) => packets.push(p.clone()),
                None => return,
            }
        }
        let pointer = name::make_data_name(&self.workspace, user, seq).ok().and_then(|n| self.store.get(&n).cloned());
        self.blobs.remove(&key);
        packets.extend(pointer);
        self.deliver(user, seq, &packets, now);
    }

    fn deliver(&mut self, user: &str, seq: u64, packets: &[DataPacket], now: u64) {
        if let Role::Member(m) = &mut self.role {
            let delta = match crdt::decode_delta(packets, &m.state.group_key) {
                Ok(d) if d.source == user && d.seq == seq => d,
                Ok(_) => {
                    let n = packets.last().map(|p| p.name.clone()).unwrap_or_default();
                    return self.reject(&n, "delta source does not match its name".into(), now);
                }
                Err(e) => {
                    let n = packets.last().map(|p| p.name.clone()).unwrap_or_default();
                    return self.reject(&n, e.to_string(), now);
                }
            };
            m.doc.apply_remote(&delta);
            let attachments: Vec<BlobRef> = delta
                .ops
                .iter()
                .filter_map(|op| match op {
                    Op::BlobAttach { blob, .. } => Some(blob.clone()),
                    _ => None,
                })
                .collect();
            for b in attachments {
                for i in 0..b.segments {
                    let n = crdt::segment_name(&b, i);
                    if !self.store.contains(&n) {
                        self.want(n, now);
                    }
                }
            }
        }
        if self.sync.on_delivered(user, seq) && self.sync.me() != Some(user) && !self.replaying {
            self.deliveries.push(Delivery {
                user: user.to_string(),
                seq,
                at: now,
            });
        }
    }

    fn on_interest(&mut self, i: InterestPacket, from: PeerId, now: u64, out: &mut Outbox) {
        if i.name == self.group {
            let Some(params) = &i.app_params else {
                return;
            };
            let Some((reaction, piggyback)) = self.sync.on_sync_bytes(params, now, &mut self.rng) else {
                return;
            };
            for p in piggyback {
                self.ingest(p, now, false);
            }
            if let Role::Repo { replay_at, last_replay } = &mut self.role {
                if matches!(reaction.comparison, Comparison::LocalNewer | Comparison::Divergent) && replay_at.is_none() {
                    let earliest = last_replay.map_or(now, |t| t + REPO_REPLAY_INTERVAL_MS);
                    *replay_at = Some(earliest.max(now));
                }
            }
            self.pump(now, out);
            return;
        }
        if let Some(d) = self.store.lookup(&i.name, i.can_be_prefix) {
            out.unicast(from, d.clone());
        }
    }

    /// Sends whatever is due.
    fn pump(&mut self, now: u64, out: &mut Outbox) {
        if let Role::Member(m) = &self.role {
            if m.batch.as_ref().is_some_and(|(_, t)| *t <= now) {
                // Only fails on a full disk or a broken name, neither of
                // which the caller could fix mid-run.
                let _ = self.flush(now, out);
            }
        }
        for o in self.sync.poll(now, &mut self.rng) {
            match o {
                SyncOutput::EmitSync => out.multicast(self.sync.payload(Vec::new()).to_interest(&self.group)),
                SyncOutput::Fetch(u, s) => {
                    let Ok(n) = name::make_data_name(&self.workspace, &u, s) else {
                        continue;
                    };
                    // A stored pointer is waiting on segments, which are
                    // fetched on their own.
                    if !self.store.contains(&n) {
                        out.multicast(InterestPacket::new(n));
                    }
                }
            }
        }
        let max = self.cfg.sync.retry_max_ms;
        let mut gave_up = Vec::new();
        for (n, r) in self.wanted.iter_mut() {
            if r.next_at <= now {
                if r.attempts >= MAX_OBJECT_ATTEMPTS {
                    gave_up.push(n.clone());
                    continue;
                }
                out.multicast(InterestPacket::new(n.clone()));
                r.attempts += 1;
                r.next_at = now + r.backoff;
                r.backoff = (r.backoff * 2).min(max);
            }
        }
        for n in gave_up {
            self.wanted.remove(&n);
        }
        if let Role::Repo { replay_at, last_replay } = &mut self.role {
            if replay_at.is_some_and(|t| t <= now) {
                *replay_at = None;
                *last_replay = Some(now);
                out.multicast(self.sync.payload(Vec::new()).to_interest(&self.group));
            }
        }
    }
}

impl Node for Peer {
    fn label(&self) -> &str {
        &self.label
    }

    fn on_packet(&mut self, now: u64, from: PeerId, packet: Packet, out: &mut Outbox) {
        match packet {
            Packet::Interest(i) => self.on_interest(i, from, now, out),
            Packet::Data(d) => {
                self.ingest(d, now, false);
                self.pump(now, out);
            }
        }
    }

    fn on_timer(&mut self, now: u64, out: &mut Outbox) {
        self.pump(now, out);
    }

    fn next_deadline(&self) -> Option<u64> {
        let batch = match &self.role {
            Role::Member(m) => m.batch.as_ref().map(|(_, t)| *t),
            Role::Repo { replay_at, .. } => *replay_at,
        };
        [self.sync.next_deadline(), batch, self.wanted.values().map(|r| r.next_at).min()]
            .into_iter()
            .flatten()
            .min()
    }

    fn on_online(&mut self, now: u64, out: &mut Outbox) {
        for r in self.wanted.values_mut() {
            r.next_at = now;
        }
        if !self.is_repo() {
            out.multicast(self.sync.payload(Vec::new()).to_interest(&self.group));
            self.sync.sent_sync(now, &mut self.rng);
        }
        self.pump(now, out);
    }

    fn on_offline(&mut self, _now: u64) {
        self.sync.pause();
    }

    fn busy(&self) -> bool {
        let batch = match &self.role {
            Role::Member(m) => m.batch.is_some(),
            Role::Repo { replay_at, .. } => replay_at.is_some(),
        };
        batch || self.sync.has_pending() || !self.wanted.is_empty()
    }
}

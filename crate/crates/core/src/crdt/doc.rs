use super::text::TextCrdt;
use super::{BlobRef, Delta, ElemId, NodeId, NodeKind, Op};
use crate::tlv::{self, tags, Reader, TlvError};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"WKSP";
const SNAPSHOT_VERSION: u8 = 1;

// Snapshot-local tags.
const NODE: u64 = 0x01;
const ENTRY: u64 = 0x02;
const ELEM: u64 = 0x03;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocError {
    #[error("path not found: {0}")]
    PathNotFound(String),
    #[error("position {pos} out of range for length {len}")]
    PositionOutOfRange { pos: usize, len: usize },
    #[error("{0} is not a text file")]
    NotText(String),
    #[error("{0} is not a folder")]
    NotFolder(String),
    #[error("bad snapshot: {0}")]
    BadSnapshot(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EntryValue {
    Folder(NodeId),
    Text(NodeId),
    Blob(BlobRef),
    Removed,
}

impl EntryValue {
    fn code(&self) -> u64 {
        match self {
            EntryValue::Folder(_) => 0,
            EntryValue::Text(_) => 1,
            EntryValue::Removed => 2,
            EntryValue::Blob(_) => 3,
        }
    }
}

/// A folder slot. The value with the greatest stamp wins.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Entry {
    pub stamp: ElemId,
    pub value: EntryValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Node {
    Folder(BTreeMap<String, Entry>),
    Text(TextCrdt),
}

/// What an op is waiting for.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Dep {
    Node(NodeId),
    Elem(NodeId, ElemId),
}

enum Outcome {
    Applied(Vec<Dep>),
    Duplicate,
    Blocked(Dep),
    Rejected,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChangeSummary {
    pub applied: usize,
    pub duplicates: usize,
    /// Ops parked until their dependencies arrive.
    pub buffered: usize,
    pub rejected: usize,
    /// Previously parked ops that became applicable.
    pub released: usize,
}

impl ChangeSummary {
    pub fn changed(&self) -> bool {
        self.applied + self.released > 0
    }
}

/// A replicated folder tree. Every replica that has applied the same set of
/// operations holds an equal document and produces a byte-equal snapshot.
#[derive(Debug, Clone)]
pub struct Doc {
    replica: String,
    clock: u64,
    nodes: BTreeMap<NodeId, Node>,
    parked: BTreeMap<Dep, Vec<Op>>,
    parked_count: usize,
    rejected: u64,
}

impl PartialEq for Doc {
    /// Replicated state only; replica name, clock and buffers are local.
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
    }
}

fn split_path(path: &str) -> Vec<&str> {
    path.split('/').filter(|s| !s.is_empty()).collect()
}

impl Doc {
    pub fn new(replica: impl Into<String>) -> Self {
        Self {
            replica: replica.into(),
            clock: 0,
            nodes: BTreeMap::from([(ElemId::root(), Node::Folder(BTreeMap::new()))]),
            parked: BTreeMap::new(),
            parked_count: 0,
            rejected: 0,
        }
    }

    pub fn replica(&self) -> &str {
        &self.replica
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn parked_ops(&self) -> usize {
        self.parked_count
    }

    pub fn rejected_ops(&self) -> u64 {
        self.rejected
    }

    fn observe(&mut self, counter: u64) {
        self.clock = self.clock.max(counter);
    }

    fn fresh_id(&mut self, width: u64) -> ElemId {
        let id = ElemId::new(self.clock + 1, self.replica.clone());
        self.clock += width;
        id
    }

    fn set_entry(map: &mut BTreeMap<String, Entry>, key: &str, stamp: &ElemId, value: EntryValue) -> bool {
        match map.get(key) {
            Some(e) if e.stamp >= *stamp => false,
            _ => {
                map.insert(
                    key.to_string(),
                    Entry {
                        stamp: stamp.clone(),
                        value,
                    },
                );
                true
            }
        }
    }

    fn try_apply(&mut self, op: &Op) -> Outcome {
        match op {
            Op::InsertText {
                target,
                id,
                origin,
                text,
            } => {
                if id.counter == 0 || id.replica.is_empty() || text.is_empty() {
                    return Outcome::Rejected;
                }
                let Some(node) = self.nodes.get_mut(target) else {
                    return Outcome::Blocked(Dep::Node(target.clone()));
                };
                let Node::Text(t) = node else {
                    return Outcome::Rejected;
                };
                if let Some(o) = origin {
                    if !t.contains(o) {
                        return Outcome::Blocked(Dep::Elem(target.clone(), o.clone()));
                    }
                }
                if !t.insert_run(id, origin.as_ref(), text) {
                    return Outcome::Duplicate;
                }
                let n = text.chars().count() as u64;
                self.observe(op.max_counter());
                Outcome::Applied((0..n).map(|k| Dep::Elem(target.clone(), id.offset(k))).collect())
            }
            Op::DeleteText { target, id } => {
                let Some(node) = self.nodes.get_mut(target) else {
                    return Outcome::Blocked(Dep::Node(target.clone()));
                };
                let Node::Text(t) = node else {
                    return Outcome::Rejected;
                };
                if !t.contains(id) {
                    return Outcome::Blocked(Dep::Elem(target.clone(), id.clone()));
                }
                if t.delete(id) {
                    Outcome::Applied(Vec::new())
                } else {
                    Outcome::Duplicate
                }
            }
            Op::MapSet {
                parent,
                key,
                stamp,
                kind,
            } => {
                if stamp.counter == 0 || key.is_empty() || key.contains('/') {
                    return Outcome::Rejected;
                }
                match self.nodes.get(parent) {
                    None => return Outcome::Blocked(Dep::Node(parent.clone())),
                    Some(Node::Text(_)) => return Outcome::Rejected,
                    Some(Node::Folder(_)) => {}
                }
                let (value, created) = match kind {
                    NodeKind::Folder => (EntryValue::Folder(stamp.clone()), Some(Node::Folder(BTreeMap::new()))),
                    NodeKind::Text => (EntryValue::Text(stamp.clone()), Some(Node::Text(TextCrdt::new()))),
                    NodeKind::Removed => (EntryValue::Removed, None),
                };
                let mut woke = Vec::new();
                let mut changed = false;
                if let Some(n) = created {
                    if !self.nodes.contains_key(stamp) {
                        self.nodes.insert(stamp.clone(), n);
                        woke.push(Dep::Node(stamp.clone()));
                        changed = true;
                    }
                }
                let Some(Node::Folder(map)) = self.nodes.get_mut(parent) else {
                    unreachable!("checked above");
                };
                changed |= Self::set_entry(map, key, stamp, value);
                self.observe(stamp.counter);
                if changed {
                    Outcome::Applied(woke)
                } else {
                    Outcome::Duplicate
                }
            }
            Op::BlobAttach {
                parent,
                key,
                stamp,
                blob,
            } => {
                if stamp.counter == 0 || key.is_empty() || key.contains('/') {
                    return Outcome::Rejected;
                }
                let map = match self.nodes.get_mut(parent) {
                    None => return Outcome::Blocked(Dep::Node(parent.clone())),
                    Some(Node::Text(_)) => return Outcome::Rejected,
                    Some(Node::Folder(m)) => m,
                };
                let changed = Self::set_entry(map, key, stamp, EntryValue::Blob(blob.clone()));
                self.observe(stamp.counter);
                if changed {
                    Outcome::Applied(Vec::new())
                } else {
                    Outcome::Duplicate
                }
            }
        }
    }

    fn apply_op(&mut self, op: Op, summary: &mut ChangeSummary) {
        let mut work = vec![(op, false)];
        while let Some((op, was_parked)) = work.pop() {
            match self.try_apply(&op) {
                Outcome::Applied(woke) => {
                    if was_parked {
                        summary.released += 1;
                    } else {
                        summary.applied += 1;
                    }
                    for d in woke {
                        if let Some(ops) = self.parked.remove(&d) {
                            self.parked_count -= ops.len();
                            // Keep original order: the stack pops from the end.
                            work.extend(ops.into_iter().rev().map(|o| (o, true)));
                        }
                    }
                }
                Outcome::Duplicate => summary.duplicates += 1,
                Outcome::Blocked(dep) => {
                    if !was_parked {
                        summary.buffered += 1;
                    }
                    let list = self.parked.entry(dep).or_default();
                    if !list.contains(&op) {
                        list.push(op);
                        self.parked_count += 1;
                    }
                }
                Outcome::Rejected => {
                    summary.rejected += 1;
                    self.rejected += 1;
                }
            }
        }
    }

    /// Applies a remote delta. Idempotent, and order-insensitive across
    /// deltas; ops with unknown dependencies wait until those arrive.
    pub fn apply_remote(&mut self, delta: &Delta) -> ChangeSummary {
        let mut s = ChangeSummary::default();
        for op in &delta.ops {
            self.apply_op(op.clone(), &mut s);
        }
        s
    }

    fn local(&mut self, ops: Vec<Op>) -> Delta {
        let mut s = ChangeSummary::default();
        for op in &ops {
            self.apply_op(op.clone(), &mut s);
        }
        debug_assert_eq!(s.applied, ops.len());
        Delta::new(self.replica.clone(), 0, ops)
    }

    fn folder(&self, id: &NodeId) -> Option<&BTreeMap<String, Entry>> {
        match self.nodes.get(id)? {
            Node::Folder(m) => Some(m),
            Node::Text(_) => None,
        }
    }

    fn text_node(&self, id: &NodeId) -> Option<&TextCrdt> {
        match self.nodes.get(id)? {
            Node::Text(t) => Some(t),
            Node::Folder(_) => None,
        }
    }

    /// The live entry at `path`.
    pub fn entry(&self, path: &str) -> Option<&Entry> {
        let parts = split_path(path);
        let (last, dirs) = parts.split_last()?;
        let mut cur = ElemId::root();
        for d in dirs {
            match &self.folder(&cur)?.get(*d)?.value {
                EntryValue::Folder(id) => cur = id.clone(),
                _ => return None,
            }
        }
        self.folder(&cur)?.get(*last).filter(|e| e.value != EntryValue::Removed)
    }

    fn folder_at(&self, path: &str) -> Result<NodeId, DocError> {
        if split_path(path).is_empty() {
            return Ok(ElemId::root());
        }
        match self.entry(path) {
            Some(Entry {
                value: EntryValue::Folder(id),
                ..
            }) => Ok(id.clone()),
            Some(_) => Err(DocError::NotFolder(path.to_string())),
            None => Err(DocError::PathNotFound(path.to_string())),
        }
    }

    fn text_at(&self, path: &str) -> Result<NodeId, DocError> {
        match self.entry(path) {
            Some(Entry {
                value: EntryValue::Text(id),
                ..
            }) => Ok(id.clone()),
            Some(_) => Err(DocError::NotText(path.to_string())),
            None => Err(DocError::PathNotFound(path.to_string())),
        }
    }

    fn parent_and_key<'p>(&self, path: &'p str) -> Result<(NodeId, &'p str), DocError> {
        let path = path.trim_matches('/');
        let (dir, key) = path.rsplit_once('/').unwrap_or(("", path));
        if key.is_empty() {
            return Err(DocError::PathNotFound(path.to_string()));
        }
        Ok((self.folder_at(dir)?, key))
    }

    fn set_local(&mut self, path: &str, kind: NodeKind) -> Result<Delta, DocError> {
        let (parent, key) = self.parent_and_key(path)?;
        let key = key.to_string();
        let stamp = self.fresh_id(1);
        Ok(self.local(vec![Op::MapSet {
            parent,
            key,
            stamp,
            kind,
        }]))
    }

    pub fn create_folder(&mut self, path: &str) -> Result<Delta, DocError> {
        self.set_local(path, NodeKind::Folder)
    }

    pub fn create_text(&mut self, path: &str) -> Result<Delta, DocError> {
        self.set_local(path, NodeKind::Text)
    }

    pub fn remove(&mut self, path: &str) -> Result<Delta, DocError> {
        if self.entry(path).is_none() {
            return Err(DocError::PathNotFound(path.to_string()));
        }
        self.set_local(path, NodeKind::Removed)
    }

    pub fn attach_blob(&mut self, path: &str, blob: BlobRef) -> Result<Delta, DocError> {
        let (parent, key) = self.parent_and_key(path)?;
        let key = key.to_string();
        let stamp = self.fresh_id(1);
        Ok(self.local(vec![Op::BlobAttach {
            parent,
            key,
            stamp,
            blob,
        }]))
    }

    pub fn local_insert(&mut self, path: &str, pos: usize, text: &str) -> Result<Delta, DocError> {
        let target = self.text_at(path)?;
        let t = self.text_node(&target).expect("resolved");
        if pos > t.len() {
            return Err(DocError::PositionOutOfRange { pos, len: t.len() });
        }
        if text.is_empty() {
            return Ok(Delta::new(self.replica.clone(), 0, Vec::new()));
        }
        let origin = if pos == 0 { None } else { t.id_at(pos - 1).cloned() };
        let id = self.fresh_id(text.chars().count() as u64);
        Ok(self.local(vec![Op::InsertText {
            target,
            id,
            origin,
            text: text.to_string(),
        }]))
    }

    pub fn local_delete(&mut self, path: &str, pos: usize, count: usize) -> Result<Delta, DocError> {
        let target = self.text_at(path)?;
        let t = self.text_node(&target).expect("resolved");
        if pos + count > t.len() {
            return Err(DocError::PositionOutOfRange {
                pos: pos + count,
                len: t.len(),
            });
        }
        let ops = t
            .visible_ids()
            .skip(pos)
            .take(count)
            .map(|id| Op::DeleteText {
                target: target.clone(),
                id: id.clone(),
            })
            .collect();
        Ok(self.local(ops))
    }

    pub fn text(&self, path: &str) -> Option<String> {
        let id = self.text_at(path).ok()?;
        Some(self.text_node(&id)?.to_string())
    }

    pub fn text_len(&self, path: &str) -> Option<usize> {
        let id = self.text_at(path).ok()?;
        Some(self.text_node(&id)?.len())
    }

    /// Live entry names under the folder at `path`.
    pub fn list(&self, path: &str) -> Result<Vec<String>, DocError> {
        let id = self.folder_at(path)?;
        Ok(self
            .folder(&id)
            .expect("resolved")
            .iter()
            .filter(|(_, e)| e.value != EntryValue::Removed)
            .map(|(k, _)| k.clone())
            .collect())
    }

    /// Every live path with a short rendering of its value.
    pub fn render(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let mut stack = vec![(String::new(), ElemId::root())];
        while let Some((prefix, id)) = stack.pop() {
            for (k, e) in self.folder(&id).into_iter().flatten() {
                let path = format!("{prefix}{k}");
                match &e.value {
                    EntryValue::Folder(f) => {
                        out.insert(format!("{path}/"), String::new());
                        stack.push((format!("{path}/"), f.clone()));
                    }
                    EntryValue::Text(t) => {
                        out.insert(path, self.text_node(t).map(|t| t.to_string()).unwrap_or_default());
                    }
                    EntryValue::Blob(b) => {
                        out.insert(path, format!("<blob {} {}B>", b.name, b.byte_length));
                    }
                    EntryValue::Removed => {}
                }
            }
        }
        out
    }

    /// Canonical serialization of the replicated state: `"WKSP"`, a version
    /// byte, then one record per node in id order. Local clock and parked
    /// ops are not included.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.push(SNAPSHOT_VERSION);
        for (id, node) in &self.nodes {
            tlv::write_nested(&mut out, NODE, |b| {
                id.encode(b);
                match node {
                    Node::Folder(m) => {
                        tlv::write_nonneg(b, tags::SEQ_NUM, 0);
                        for (k, e) in m {
                            tlv::write_nested(b, ENTRY, |eb| {
                                tlv::write_tlv(eb, tags::NAME_COMPONENT, k.as_bytes());
                                e.stamp.encode(eb);
                                tlv::write_nonneg(eb, tags::SEQ_NUM, e.value.code());
                                if let EntryValue::Blob(r) = &e.value {
                                    eb.extend(r.encode());
                                }
                            });
                        }
                    }
                    Node::Text(t) => {
                        tlv::write_nonneg(b, tags::SEQ_NUM, 1);
                        for (eid, ch, deleted) in t.iter() {
                            tlv::write_nested(b, ELEM, |xb| {
                                eid.encode(xb);
                                tlv::write_tlv(xb, tags::CONTENT, ch.encode_utf8(&mut [0; 4]).as_bytes());
                                tlv::write_nonneg(xb, tags::SEQ_NUM, deleted as u64);
                            });
                        }
                    }
                }
            });
        }
        out
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.snapshot()).into()
    }

    pub fn restore(bytes: &[u8], replica: impl Into<String>) -> Result<Self, DocError> {
        let bad = |e: TlvError| DocError::BadSnapshot(e.to_string());
        if bytes.len() < 5 || &bytes[..4] != MAGIC {
            return Err(DocError::BadSnapshot("missing magic".into()));
        }
        if bytes[4] != SNAPSHOT_VERSION {
            return Err(DocError::BadSnapshot(format!("unsupported version {}", bytes[4])));
        }
        let mut doc = Doc::new(replica);
        doc.nodes.clear();
        let mut r = Reader::new(&bytes[5..]);
        while r.peek_type().map_err(bad)?.is_some() {
            let mut nr = Reader::new(r.expect(NODE, "node").map_err(bad)?);
            let id = ElemId::decode_value(nr.expect(tags::ELEM_ID, "node id").map_err(bad)?).map_err(bad)?;
            doc.observe(id.counter);
            let kind = tlv::parse_nonneg(nr.expect(tags::SEQ_NUM, "node kind").map_err(bad)?).map_err(bad)?;
            let node = match kind {
                0 => {
                    let mut m = BTreeMap::new();
                    while nr.peek_type().map_err(bad)?.is_some() {
                        let mut er = Reader::new(nr.expect(ENTRY, "entry").map_err(bad)?);
                        let key = String::from_utf8(er.expect(tags::NAME_COMPONENT, "key").map_err(bad)?.to_vec())
                            .map_err(|_| DocError::BadSnapshot("key is not UTF-8".into()))?;
                        let stamp = ElemId::decode_value(er.expect(tags::ELEM_ID, "stamp").map_err(bad)?).map_err(bad)?;
                        doc.observe(stamp.counter);
                        let value = match tlv::parse_nonneg(er.expect(tags::SEQ_NUM, "value kind").map_err(bad)?).map_err(bad)? {
                            0 => EntryValue::Folder(stamp.clone()),
                            1 => EntryValue::Text(stamp.clone()),
                            2 => EntryValue::Removed,
                            3 => EntryValue::Blob(
                                BlobRef::decode_value(er.expect(tags::BLOB_REF, "blob").map_err(bad)?).map_err(bad)?,
                            ),
                            k => return Err(DocError::BadSnapshot(format!("entry kind {k}"))),
                        };
                        er.finish().map_err(bad)?;
                        m.insert(key, Entry { stamp, value });
                    }
                    Node::Folder(m)
                }
                1 => {
                    let mut elems = Vec::new();
                    while nr.peek_type().map_err(bad)?.is_some() {
                        let mut xr = Reader::new(nr.expect(ELEM, "element").map_err(bad)?);
                        let eid = ElemId::decode_value(xr.expect(tags::ELEM_ID, "id").map_err(bad)?).map_err(bad)?;
                        let ch = std::str::from_utf8(xr.expect(tags::CONTENT, "char").map_err(bad)?)
                            .ok()
                            .and_then(|s| {
                                let mut it = s.chars();
                                let c = it.next()?;
                                it.next().is_none().then_some(c)
                            })
                            .ok_or_else(|| DocError::BadSnapshot("element is not one char".into()))?;
                        let deleted = tlv::parse_nonneg(xr.expect(tags::SEQ_NUM, "deleted").map_err(bad)?).map_err(bad)? != 0;
                        xr.finish().map_err(bad)?;
                        doc.observe(eid.counter);
                        elems.push((eid, ch, deleted));
                    }
                    Node::Text(TextCrdt::from_elements(elems))
                }
                k => return Err(DocError::BadSnapshot(format!("node kind {k}"))),
            };
            nr.finish().map_err(bad)?;
            doc.nodes.insert(id, node);
        }
        if !doc.nodes.contains_key(&ElemId::root()) {
            return Err(DocError::BadSnapshot("no root folder".into()));
        }
        Ok(doc)
    }
}

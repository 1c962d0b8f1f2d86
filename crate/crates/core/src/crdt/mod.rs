//! Replicated document: folders are last-writer-wins maps, text files are
//! RGA sequences, binary files are references to immutable blobs.

mod doc;
mod publish;
mod text;

pub use doc::{ChangeSummary, Doc, DocError, Entry, EntryValue};
pub use publish::{decode_blob, decode_delta, pointer_target, segment_name, PublishError, Publisher};
pub use text::TextCrdt;

use crate::name::Name;
use crate::tlv::{self, tags, Reader, TlvError};

/// Globally unique element id. Orders by counter, then replica bytes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ElemId {
    pub counter: u64,
    pub replica: String,
}

impl ElemId {
    pub fn new(counter: u64, replica: impl Into<String>) -> Self {
        Self {
            counter,
            replica: replica.into(),
        }
    }

    /// The root folder.
    pub fn root() -> Self {
        Self::default()
    }

    pub fn offset(&self, k: u64) -> Self {
        Self::new(self.counter + k, self.replica.clone())
    }

    fn encode(&self, buf: &mut Vec<u8>) {
        tlv::write_nested(buf, tags::ELEM_ID, |b| {
            tlv::write_nonneg(b, tags::SEQ_NUM, self.counter);
            tlv::write_tlv(b, tags::NAME_COMPONENT, self.replica.as_bytes());
        });
    }

    fn decode_value(v: &[u8]) -> Result<Self, TlvError> {
        let mut r = Reader::new(v);
        let counter = tlv::parse_nonneg(r.expect(tags::SEQ_NUM, "counter")?)?;
        let replica = utf8(r.expect(tags::NAME_COMPONENT, "replica")?)?;
        r.finish()?;
        Ok(Self { counter, replica })
    }
}

fn utf8(v: &[u8]) -> Result<String, TlvError> {
    String::from_utf8(v.to_vec()).map_err(|_| TlvError::InvalidValue("not UTF-8"))
}

pub type NodeId = ElemId;

/// Pointer to an immutable, segmented, versioned object.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlobRef {
    pub name: Name,
    pub byte_length: u64,
    pub segments: u64,
    /// SHA-256 over the concatenated segment contents.
    pub digest: [u8; 32],
}

impl BlobRef {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        tlv::write_nested(&mut out, tags::BLOB_REF, |b| {
            self.name.encode_tlv(b);
            tlv::write_nonneg(b, tags::SEQ_NUM, self.byte_length);
            tlv::write_nonneg(b, tags::SEQ_NUM, self.segments);
            tlv::write_tlv(b, tags::CONTENT, &self.digest);
        });
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TlvError> {
        Self::decode_value(tlv::read_outer(bytes, tags::BLOB_REF)?)
    }

    fn decode_value(v: &[u8]) -> Result<Self, TlvError> {
        let mut r = Reader::new(v);
        let name = Name::decode_value(r.expect(tags::NAME, "blob name")?)?;
        let byte_length = tlv::parse_nonneg(r.expect(tags::SEQ_NUM, "byte length")?)?;
        let segments = tlv::parse_nonneg(r.expect(tags::SEQ_NUM, "segments")?)?;
        let digest = r
            .expect(tags::CONTENT, "digest")?
            .try_into()
            .map_err(|_| TlvError::InvalidValue("digest length"))?;
        r.finish()?;
        Ok(Self {
            name,
            byte_length,
            segments,
            digest,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Folder,
    Text,
    Removed,
}

impl NodeKind {
    fn code(self) -> u64 {
        match self {
            NodeKind::Folder => 0,
            NodeKind::Text => 1,
            NodeKind::Removed => 2,
        }
    }

    fn from_code(c: u64) -> Result<Self, TlvError> {
        match c {
            0 => Ok(NodeKind::Folder),
            1 => Ok(NodeKind::Text),
            2 => Ok(NodeKind::Removed),
            _ => Err(TlvError::InvalidValue("node kind")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Op {
    /// A run of characters with consecutive ids starting at `id`, placed
    /// after `origin` (`None` = start of text).
    InsertText {
        target: NodeId,
        id: ElemId,
        origin: Option<ElemId>,
        text: String,
    },
    DeleteText {
        target: NodeId,
        id: ElemId,
    },
    /// Sets `parent[key]`. For folders and texts, the new node's id is
    /// `stamp`.
    MapSet {
        parent: NodeId,
        key: String,
        stamp: ElemId,
        kind: NodeKind,
    },
    BlobAttach {
        parent: NodeId,
        key: String,
        stamp: ElemId,
        blob: BlobRef,
    },
}

impl Op {
    /// Highest counter the op carries, for Lamport clock updates.
    pub fn max_counter(&self) -> u64 {
        match self {
            Op::InsertText { id, text, .. } => id.counter + (text.chars().count() as u64).saturating_sub(1),
            Op::DeleteText { id, .. } => id.counter,
            Op::MapSet { stamp, .. } | Op::BlobAttach { stamp, .. } => stamp.counter,
        }
    }

    fn encode(&self, buf: &mut Vec<u8>) {
        match self {
            Op::InsertText {
                target,
                id,
                origin,
                text,
            } => tlv::write_nested(buf, tags::INSERT_TEXT, |b| {
                target.encode(b);
                id.encode(b);
                if let Some(o) = origin {
                    o.encode(b);
                }
                tlv::write_tlv(b, tags::CONTENT, text.as_bytes());
            }),
            Op::DeleteText { target, id } => tlv::write_nested(buf, tags::DELETE_TEXT, |b| {
                target.encode(b);
                id.encode(b);
            }),
            Op::MapSet {
                parent,
                key,
                stamp,
                kind,
            } => tlv::write_nested(buf, tags::MAP_SET, |b| {
                parent.encode(b);
                tlv::write_tlv(b, tags::NAME_COMPONENT, key.as_bytes());
                stamp.encode(b);
                tlv::write_nonneg(b, tags::SEQ_NUM, kind.code());
            }),
            Op::BlobAttach {
                parent,
                key,
                stamp,
                blob,
            } => tlv::write_nested(buf, tags::BLOB_ATTACH, |b| {
                parent.encode(b);
                tlv::write_tlv(b, tags::NAME_COMPONENT, key.as_bytes());
                stamp.encode(b);
                b.extend(blob.encode());
            }),
        }
    }

    fn decode(typ: u64, v: &[u8]) -> Result<Self, TlvError> {
        let mut r = Reader::new(v);
        let elem = |r: &mut Reader, what| ElemId::decode_value(r.expect(tags::ELEM_ID, what)?);
        let op = match typ {
            tags::INSERT_TEXT => {
                let target = elem(&mut r, "target")?;
                let id = elem(&mut r, "id")?;
                let origin = r.optional(tags::ELEM_ID)?.map(ElemId::decode_value).transpose()?;
                let text = utf8(r.expect(tags::CONTENT, "text")?)?;
                if text.is_empty() {
                    return Err(TlvError::InvalidValue("empty insert"));
                }
                Op::InsertText {
                    target,
                    id,
                    origin,
                    text,
                }
            }
            tags::DELETE_TEXT => Op::DeleteText {
                target: elem(&mut r, "target")?,
                id: elem(&mut r, "id")?,
            },
            tags::MAP_SET => Op::MapSet {
                parent: elem(&mut r, "parent")?,
                key: utf8(r.expect(tags::NAME_COMPONENT, "key")?)?,
                stamp: elem(&mut r, "stamp")?,
                kind: NodeKind::from_code(tlv::parse_nonneg(r.expect(tags::SEQ_NUM, "kind")?)?)?,
            },
            tags::BLOB_ATTACH => Op::BlobAttach {
                parent: elem(&mut r, "parent")?,
                key: utf8(r.expect(tags::NAME_COMPONENT, "key")?)?,
                stamp: elem(&mut r, "stamp")?,
                blob: BlobRef::decode_value(r.expect(tags::BLOB_REF, "blob")?)?,
            },
            t => return Err(TlvError::UnknownTlvType(t)),
        };
        r.finish()?;
        Ok(op)
    }
}

/// A batch of operations from one replica, published as one sync sequence
/// number.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Delta {
    pub source: String,
    pub seq: u64,
    pub ops: Vec<Op>,
}

impl Delta {
    pub fn new(source: impl Into<String>, seq: u64, ops: Vec<Op>) -> Self {
        Self {
            source: source.into(),
            seq,
            ops,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Appends `other`'s operations, for coalescing local edits.
    pub fn extend(&mut self, other: Delta) {
        self.ops.extend(other.ops);
    }

    /// `Delta { DeltaSource { NameComponent replica, SeqNum seq }, op * }`
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        tlv::write_nested(&mut out, tags::DELTA, |b| {
            tlv::write_nested(b, tags::DELTA_SOURCE, |s| {
                tlv::write_tlv(s, tags::NAME_COMPONENT, self.source.as_bytes());
                tlv::write_nonneg(s, tags::SEQ_NUM, self.seq);
            });
            for op in &self.ops {
                op.encode(b);
            }
        });
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TlvError> {
        let mut r = Reader::new(tlv::read_outer(bytes, tags::DELTA)?);
        let mut s = Reader::new(r.expect(tags::DELTA_SOURCE, "DeltaSource")?);
        let source = utf8(s.expect(tags::NAME_COMPONENT, "source")?)?;
        let seq = tlv::parse_nonneg(s.expect(tags::SEQ_NUM, "seq")?)?;
        s.finish()?;
        let mut ops = Vec::new();
        while let Some((t, v)) = r.read()? {
            ops.push(Op::decode(t, v)?);
        }
        Ok(Self { source, seq, ops })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_roundtrip() {
        let d = Delta::new(
            "alice",
            3,
            vec![
                Op::MapSet {
                    parent: ElemId::root(),
                    key: "notes.txt".into(),
                    stamp: ElemId::new(1, "alice"),
                    kind: NodeKind::Text,
                },
                Op::InsertText {
                    target: ElemId::new(1, "alice"),
                    id: ElemId::new(2, "alice"),
                    origin: None,
                    text: "héllo".into(),
                },
                Op::InsertText {
                    target: ElemId::new(1, "alice"),
                    id: ElemId::new(7, "alice"),
                    origin: Some(ElemId::new(6, "alice")),
                    text: "!".into(),
                },
                Op::DeleteText {
                    target: ElemId::new(1, "alice"),
                    id: ElemId::new(3, "alice"),
                },
                Op::BlobAttach {
                    parent: ElemId::root(),
                    key: "a.png".into(),
                    stamp: ElemId::new(8, "alice"),
                    blob: BlobRef {
                        name: Name::parse("w/alice/BLOB/v=1").unwrap(),
                        byte_length: 10,
                        segments: 1,
                        digest: [7; 32],
                    },
                },
            ],
        );
        assert_eq!(Delta::decode(&d.encode()).unwrap(), d);
        assert_eq!(d.ops[1].max_counter(), 6);
    }

    #[test]
    fn rejects_empty_insert() {
        let d = Delta::new(
            "a",
            1,
            vec![Op::InsertText {
                target: ElemId::root(),
                id: ElemId::new(1, "a"),
                origin: None,
                text: String::new(),
            }],
        );
        assert!(Delta::decode(&d.encode()).is_err());
    }
}

//! Wrapping deltas and binary files into signed, encrypted Data packets.

use super::{BlobRef, Delta};
use crate::membership::MemberState;
use crate::name::{self, Component, Name, NameError};
use crate::packet::{ContentType, DataPacket, Validity};
use crate::security::{CryptoError, GroupKey};
use crate::tlv::TlvError;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::packet::DEFAULT_MAX_PAYLOAD;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PublishError {
    #[error("nothing to publish")]
    EmptyDelta,
    #[error("blob {0} is missing segments")]
    Incomplete(Name),
    #[error("blob {0} failed its digest check")]
    Corrupt(Name),
    #[error("packet {0} is not a delta publication")]
    NotADelta(Name),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Malformed(#[from] TlvError),
    #[error(transparent)]
    Name(#[from] NameError),
}

/// Per-member publication state. Blob versions only move forward; after a
/// restart, seed them from the store with [`Publisher::observe_blob_version`].
#[derive(Debug, Clone)]
pub struct Publisher {
    pub max_payload: usize,
    next_blob_version: u64,
}

impl Default for Publisher {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_PAYLOAD)
    }
}

impl Publisher {
    pub fn new(max_payload: usize) -> Self {
        assert!(max_payload > 0, "max payload must be positive");
        Self {
            max_payload,
            next_blob_version: 1,
        }
    }

    pub fn next_blob_version(&self) -> u64 {
        self.next_blob_version
    }

    /// Records that blob version `v` already exists.
    pub fn observe_blob_version(&mut self, v: u64) {
        self.next_blob_version = self.next_blob_version.max(v + 1);
    }

    /// Packets for `delta`, named under `member` with sequence `delta.seq`.
    /// A delta that fits goes out as one encrypted DATA packet. A larger one
    /// becomes encrypted blob segments plus a DATA packet holding a
    /// cleartext [`BlobRef`], so holders without the group key (the repo)
    /// can still fetch the segments.
    pub fn encode_delta<R: RngCore + CryptoRng>(
        &mut self,
        delta: &Delta,
        member: &MemberState,
        now: u64,
        rng: &mut R,
    ) -> Result<Vec<DataPacket>, PublishError> {
        if delta.is_empty() {
            return Err(PublishError::EmptyDelta);
        }
        let bytes = delta.encode();
        let data_name = name::make_data_name(&member.workspace, &member.username, delta.seq)?;
        let validity = Validity::new(now, now).expect("ordered");
        if bytes.len() <= self.max_payload {
            let ct = member.group_key.encrypt(&bytes, rng);
            let p = DataPacket::unsigned(data_name, ContentType::Blob, ct, validity);
            return Ok(vec![member.sign(p)]);
        }
        let (blob, mut packets) = self.encode_blob(&bytes, member, now, rng)?;
        let pointer = DataPacket::unsigned(data_name, ContentType::Link, blob.encode(), validity);
        packets.push(member.sign(pointer));
        Ok(packets)
    }

    /// Segments `content` into a fresh blob version. Returns the reference
    /// and the signed segments in order.
    pub fn encode_blob<R: RngCore + CryptoRng>(
        &mut self,
        content: &[u8],
        member: &MemberState,
        now: u64,
        rng: &mut R,
    ) -> Result<(BlobRef, Vec<DataPacket>), PublishError> {
        let version = self.next_blob_version;
        let base = name::make_blob_name(&member.workspace, &member.username, version)?;
        self.next_blob_version += 1;
        let validity = Validity::new(now, now).expect("ordered");
        let mut hasher = Sha256::new();
        let mut packets = Vec::new();
        // An empty file is still one (empty) segment.
        let chunks: Vec<&[u8]> = if content.is_empty() {
            vec![&[]]
        } else {
            content.chunks(self.max_payload).collect()
        };
        for (i, chunk) in chunks.into_iter().enumerate() {
            let ct = member.group_key.encrypt(chunk, rng);
            hasher.update(&ct);
            let p = DataPacket::unsigned(base.child(Component::segment(i as u64)), ContentType::Blob, ct, validity);
            packets.push(member.sign(p));
        }
        let blob = BlobRef {
            name: base,
            byte_length: content.len() as u64,
            segments: packets.len() as u64,
            digest: hasher.finalize().into(),
        };
        Ok((blob, packets))
    }
}

/// Name of segment `i` of `blob`.
pub fn segment_name(blob: &BlobRef, i: u64) -> Name {
    blob.name.child(Component::segment(i))
}

/// The blob a DATA packet points to, if it is a pointer.
pub fn pointer_target(p: &DataPacket) -> Option<BlobRef> {
    if p.content_type != ContentType::Link {
        return None;
    }
    BlobRef::decode(&p.content).ok()
}

/// Reassembles a blob from its segments (any order, extras ignored) and
/// checks the digest before decrypting.
pub fn decode_blob(blob: &BlobRef, segments: &[DataPacket], gk: &GroupKey) -> Result<Vec<u8>, PublishError> {
    let by_name: BTreeMap<&Name, &DataPacket> = segments.iter().map(|p| (&p.name, p)).collect();
    let mut ordered = Vec::with_capacity(blob.segments as usize);
    for i in 0..blob.segments {
        let p = by_name
            .get(&segment_name(blob, i))
            .ok_or_else(|| PublishError::Incomplete(blob.name.clone()))?;
        ordered.push(*p);
    }
    let mut hasher = Sha256::new();
    for p in &ordered {
        hasher.update(&p.content);
    }
    if <[u8; 32]>::from(hasher.finalize()) != blob.digest {
        return Err(PublishError::Corrupt(blob.name.clone()));
    }
    let mut out = Vec::with_capacity(blob.byte_length as usize);
    for p in ordered {
        out.extend(gk.decrypt(&p.content)?);
    }
    if out.len() as u64 != blob.byte_length {
        return Err(PublishError::Corrupt(blob.name.clone()));
    }
    Ok(out)
}

/// Inverse of [`Publisher::encode_delta`]. `packets` must contain the DATA
/// packet and, for a segmented delta, every segment.
pub fn decode_delta(packets: &[DataPacket], gk: &GroupKey) -> Result<Delta, PublishError> {
    let head = packets
        .iter()
        .find(|p| p.content_type != ContentType::Blob || !is_segment(&p.name))
        .ok_or(PublishError::EmptyDelta)?;
    let bytes = match head.content_type {
        ContentType::Blob => gk.decrypt(&head.content)?,
        ContentType::Link => {
            let blob = BlobRef::decode(&head.content)?;
            decode_blob(&blob, packets, gk)?
        }
        _ => return Err(PublishError::NotADelta(head.name.clone())),
    };
    Ok(Delta::decode(&bytes)?)
}

fn is_segment(n: &Name) -> bool {
    n.last().and_then(|c| c.typed_number("seg")).is_some()
}

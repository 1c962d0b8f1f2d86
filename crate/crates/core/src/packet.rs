//! Interest and Data packets and their wire encoding.
//!
//! Data layout, in fixed order:
//!
//! ```text
//! Data(0x06) {
//!   Name(0x07) { NameComponent(0x08)* }
//!   ContentType(0x18) varnum
//!   Content(0x15) bytes
//!   SigInfo(0x16) { SigType(0x1B) varnum, KeyLocator(0x1C) { Name },
//!                   ValidityNotBefore(0xF0) varnum, ValidityNotAfter(0xF1) varnum }
//!   SigValue(0x17) bytes
//! }
//! Interest(0x05) { Name, CanBePrefix(0x21)?, AppParams(0x24)? }
//! ```
//!
//! The signature covers the concatenated encodings of the first four Data
//! fields, see [`DataPacket::signed_portion`].

use crate::name::Name;
use crate::tlv::{self, tags, Reader, TlvError};

/// Default maximum payload carried by one Data packet before segmentation.
pub const DEFAULT_MAX_PAYLOAD: usize = 8800;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContentType {
    Blob,
    /// Cleartext pointer to a segmented object.
    Link,
    Key,
    Invite,
    Sync,
}

impl ContentType {
    pub fn code(self) -> u64 {
        match self {
            ContentType::Blob => 0,
            ContentType::Link => 1,
            ContentType::Key => 2,
            ContentType::Invite => 4,
            ContentType::Sync => 5,
        }
    }

    pub fn from_code(code: u64) -> Result<Self, TlvError> {
        Ok(match code {
            0 => ContentType::Blob,
            1 => ContentType::Link,
            2 => ContentType::Key,
            4 => ContentType::Invite,
            5 => ContentType::Sync,
            _ => return Err(TlvError::InvalidValue("content type")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SigType {
    Ed25519,
}

impl SigType {
    pub fn code(self) -> u64 {
        5
    }

    pub fn from_code(code: u64) -> Result<Self, TlvError> {
        match code {
            5 => Ok(SigType::Ed25519),
            _ => Err(TlvError::InvalidValue("signature type")),
        }
    }
}

/// Validity window in milliseconds, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Validity {
    pub not_before: u64,
    pub not_after: u64,
}

impl Validity {
    pub fn new(not_before: u64, not_after: u64) -> Option<Self> {
        (not_before <= not_after).then_some(Self {
            not_before,
            not_after,
        })
    }

    /// `[start, start + lifetime]`, saturating.
    pub fn starting_at(start: u64, lifetime: u64) -> Self {
        Self {
            not_before: start,
            not_after: start.saturating_add(lifetime),
        }
    }

    pub fn covers(&self, t: u64) -> bool {
        self.not_before <= t && t <= self.not_after
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SigInfo {
    pub sig_type: SigType,
    pub key_locator: Name,
    pub validity: Validity,
}

impl SigInfo {
    fn encode(&self, buf: &mut Vec<u8>) {
        tlv::write_nested(buf, tags::SIG_INFO, |b| {
            tlv::write_nonneg(b, tags::SIG_TYPE, self.sig_type.code());
            tlv::write_nested(b, tags::KEY_LOCATOR, |k| self.key_locator.encode_tlv(k));
            tlv::write_nonneg(b, tags::VALIDITY_NOT_BEFORE, self.validity.not_before);
            tlv::write_nonneg(b, tags::VALIDITY_NOT_AFTER, self.validity.not_after);
        });
    }

    fn decode(value: &[u8]) -> Result<Self, TlvError> {
        let mut r = Reader::new(value);
        let sig_type = SigType::from_code(tlv::parse_nonneg(r.expect(tags::SIG_TYPE, "SigType")?)?)?;
        let kl = r.expect(tags::KEY_LOCATOR, "KeyLocator")?;
        let key_locator = Name::decode_value(tlv::read_outer(kl, tags::NAME)?)?;
        let nb = tlv::parse_nonneg(r.expect(tags::VALIDITY_NOT_BEFORE, "ValidityNotBefore")?)?;
        let na = tlv::parse_nonneg(r.expect(tags::VALIDITY_NOT_AFTER, "ValidityNotAfter")?)?;
        r.finish()?;
        let validity = Validity::new(nb, na).ok_or(TlvError::InvalidValue("notBefore > notAfter"))?;
        Ok(Self {
            sig_type,
            key_locator,
            validity,
        })
    }
}

/// A named, signed, immutable data object.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DataPacket {
    pub name: Name,
    pub content_type: ContentType,
    pub content: Vec<u8>,
    pub sig_info: SigInfo,
    pub sig_value: Vec<u8>,
}

impl DataPacket {
    /// An unsigned packet; [`crate::security::sign_data`] fills in the rest.
    pub fn unsigned(name: Name, content_type: ContentType, content: Vec<u8>, validity: Validity) -> Self {
        Self {
            name,
            content_type,
            content,
            sig_info: SigInfo {
                sig_type: SigType::Ed25519,
                key_locator: Name::new(),
                validity,
            },
            sig_value: Vec::new(),
        }
    }

    pub fn key_locator(&self) -> &Name {
        &self.sig_info.key_locator
    }

    pub fn validity(&self) -> Validity {
        self.sig_info.validity
    }

    /// Bytes covered by the signature.
    pub fn signed_portion(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.content.len() + 128);
        self.name.encode_tlv(&mut buf);
        tlv::write_nonneg(&mut buf, tags::CONTENT_TYPE, self.content_type.code());
        tlv::write_tlv(&mut buf, tags::CONTENT, &self.content);
        self.sig_info.encode(&mut buf);
        buf
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut inner = self.signed_portion();
        tlv::write_tlv(&mut inner, tags::SIG_VALUE, &self.sig_value);
        let mut out = Vec::with_capacity(inner.len() + 6);
        tlv::write_tlv(&mut out, tags::DATA, &inner);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TlvError> {
        Self::decode_value(tlv::read_outer(bytes, tags::DATA)?)
    }

    pub fn decode_value(value: &[u8]) -> Result<Self, TlvError> {
        let mut r = Reader::new(value);
        let name = Name::decode_value(r.expect(tags::NAME, "Name")?)?;
        if name.is_empty() {
            return Err(TlvError::InvalidValue("empty Data name"));
        }
        let content_type =
            ContentType::from_code(tlv::parse_nonneg(r.expect(tags::CONTENT_TYPE, "ContentType")?)?)?;
        let content = r.expect(tags::CONTENT, "Content")?.to_vec();
        let sig_info = SigInfo::decode(r.expect(tags::SIG_INFO, "SigInfo")?)?;
        let sig_value = r.expect(tags::SIG_VALUE, "SigValue")?.to_vec();
        r.finish()?;
        Ok(Self {
            name,
            content_type,
            content,
            sig_info,
            sig_value,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InterestPacket {
    pub name: Name,
    pub can_be_prefix: bool,
    pub app_params: Option<Vec<u8>>,
}

impl InterestPacket {
    pub fn new(name: Name) -> Self {
        Self {
            name,
            can_be_prefix: false,
            app_params: None,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut inner = Vec::new();
        self.name.encode_tlv(&mut inner);
        if self.can_be_prefix {
            tlv::write_tlv(&mut inner, tags::CAN_BE_PREFIX, &[]);
        }
        if let Some(p) = &self.app_params {
            tlv::write_tlv(&mut inner, tags::APP_PARAMS, p);
        }
        let mut out = Vec::with_capacity(inner.len() + 6);
        tlv::write_tlv(&mut out, tags::INTEREST, &inner);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TlvError> {
        Self::decode_value(tlv::read_outer(bytes, tags::INTEREST)?)
    }

    pub fn decode_value(value: &[u8]) -> Result<Self, TlvError> {
        let mut r = Reader::new(value);
        let name = Name::decode_value(r.expect(tags::NAME, "Name")?)?;
        if name.is_empty() {
            return Err(TlvError::InvalidValue("empty Interest name"));
        }
        let can_be_prefix = match r.optional(tags::CAN_BE_PREFIX)? {
            Some([]) => true,
            Some(_) => return Err(TlvError::LengthMismatch),
            None => false,
        };
        let app_params = r.optional(tags::APP_PARAMS)?.map(<[u8]>::to_vec);
        r.finish()?;
        Ok(Self {
            name,
            can_be_prefix,
            app_params,
        })
    }
}

/// Either packet type, as carried on a face.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Interest(InterestPacket),
    Data(DataPacket),
}

impl From<InterestPacket> for Packet {
    fn from(i: InterestPacket) -> Self {
        Packet::Interest(i)
    }
}

impl From<DataPacket> for Packet {
    fn from(d: DataPacket) -> Self {
        Packet::Data(d)
    }
}

impl Packet {
    pub fn name(&self) -> &Name {
        match self {
            Packet::Interest(i) => &i.name,
            Packet::Data(d) => &d.name,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            Packet::Interest(i) => i.encode(),
            Packet::Data(d) => d.encode(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TlvError> {
        match Reader::new(bytes).peek_type()? {
            Some(tags::INTEREST) => InterestPacket::decode(bytes).map(Packet::Interest),
            Some(tags::DATA) => DataPacket::decode(bytes).map(Packet::Data),
            Some(t) => Err(TlvError::UnknownTlvType(t)),
            None => Err(TlvError::Truncated),
        }
    }
}

/// Random packet generators shared by unit tests, property tests and the
/// acceptance suite.
pub mod arbitrary {
    use super::*;
    use crate::name::Component;
    use rand::Rng;

    pub fn name(rng: &mut impl Rng, min_len: usize) -> Name {
        let len = rng.gen_range(min_len..min_len + 7);
        Name::from_components((0..len).map(|_| {
            let clen = rng.gen_range(1..16);
            Component::new((0..clen).map(|_| rng.gen::<u8>()).collect::<Vec<_>>())
        }))
    }

    fn bytes(rng: &mut impl Rng, max: usize) -> Vec<u8> {
        // Occasionally cross the one-byte length boundary.
        let len = if rng.gen_bool(0.1) {
            rng.gen_range(250..max.max(251))
        } else {
            rng.gen_range(0..64)
        };
        (0..len).map(|_| rng.gen()).collect()
    }

    fn number(rng: &mut impl Rng) -> u64 {
        match rng.gen_range(0..4) {
            0 => rng.gen_range(0..253),
            1 => rng.gen_range(253..0x1_0000),
            2 => rng.gen_range(0x1_0000..0x1_0000_0000),
            _ => rng.gen(),
        }
    }

    pub fn data(rng: &mut impl Rng) -> DataPacket {
        let ct = [
            ContentType::Blob,
            ContentType::Link,
            ContentType::Key,
            ContentType::Invite,
            ContentType::Sync,
        ][rng.gen_range(0..5)];
        let a = number(rng);
        let b = number(rng);
        DataPacket {
            name: name(rng, 1),
            content_type: ct,
            content: bytes(rng, 2000),
            sig_info: SigInfo {
                sig_type: SigType::Ed25519,
                key_locator: name(rng, 0),
                validity: Validity::new(a.min(b), a.max(b)).unwrap(),
            },
            sig_value: bytes(rng, 300),
        }
    }

    pub fn interest(rng: &mut impl Rng) -> InterestPacket {
        InterestPacket {
            name: name(rng, 1),
            can_be_prefix: rng.gen(),
            app_params: rng.gen_bool(0.6).then(|| bytes(rng, 1000)),
        }
    }
}

//! Type-Length-Value primitives.
//!
//! Types and lengths are both encoded as *varnums*: one byte below 253,
//! otherwise a marker byte (`0xFD`, `0xFE`, `0xFF`) followed by a 2, 4 or 8
//! byte big-endian integer. Only the shortest form is accepted on decode, so
//! every value has exactly one byte representation. Signatures depend on that.

use thiserror::Error;

/// Tag assignments for every wire object.
pub mod tags {
    pub const INTEREST: u64 = 0x05;
    pub const DATA: u64 = 0x06;
    pub const NAME: u64 = 0x07;
    pub const NAME_COMPONENT: u64 = 0x08;
    pub const CONTENT: u64 = 0x15;
    pub const SIG_INFO: u64 = 0x16;
    pub const SIG_VALUE: u64 = 0x17;
    pub const CONTENT_TYPE: u64 = 0x18;
    pub const SIG_TYPE: u64 = 0x1B;
    pub const KEY_LOCATOR: u64 = 0x1C;
    pub const CAN_BE_PREFIX: u64 = 0x21;
    pub const APP_PARAMS: u64 = 0x24;
    pub const STATE_VECTOR: u64 = 0xC9;
    pub const STATE_VECTOR_ENTRY: u64 = 0xCA;
    pub const SEQ_NUM: u64 = 0xCC;
    pub const VALIDITY_NOT_BEFORE: u64 = 0xF0;
    pub const VALIDITY_NOT_AFTER: u64 = 0xF1;

    // CRDT deltas
    pub const DELTA: u64 = 0xD0;
    pub const DELTA_SOURCE: u64 = 0xD1;
    pub const INSERT_TEXT: u64 = 0xD2;
    pub const DELETE_TEXT: u64 = 0xD3;
    pub const MAP_SET: u64 = 0xD4;
    pub const BLOB_ATTACH: u64 = 0xD5;
    pub const ELEM_ID: u64 = 0xD6;
    pub const BLOB_REF: u64 = 0xD7;

    // Invitation content
    pub const INSTANCE_CERT: u64 = 0xE0;
    pub const INVITEE_CERT: u64 = 0xE1;
    pub const WRAPPED_KEY: u64 = 0xE2;
    pub const SCHEMA: u64 = 0xE3;
    pub const INVITER_CHAIN: u64 = 0xE4;
    pub const SCHEMA_RULE: u64 = 0xE5;
    pub const MEMBERSHIP_MODEL: u64 = 0xE6;
    pub const INITIATOR: u64 = 0xE7;

    /// Whether `t` has a meaning in this protocol. Assigned types are never
    /// silently skipped, even when non-critical, so an optional field can't
    /// be mistaken for an unknown extension.
    pub fn is_assigned(t: u64) -> bool {
        matches!(
            t,
            INTEREST..=NAME_COMPONENT
                | CONTENT..=CONTENT_TYPE
                | SIG_TYPE
                | KEY_LOCATOR
                | CAN_BE_PREFIX
                | APP_PARAMS
                | STATE_VECTOR
                | STATE_VECTOR_ENTRY
                | SEQ_NUM
                | VALIDITY_NOT_BEFORE
                | VALIDITY_NOT_AFTER
                | DELTA..=BLOB_REF
                | INSTANCE_CERT..=INITIATOR
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TlvError {
    #[error("input truncated")]
    Truncated,
    #[error("non-minimal varnum encoding")]
    NonMinimalEncoding,
    #[error("unknown critical TLV type {0:#x}")]
    UnknownTlvType(u64),
    #[error("length field does not match enclosed bytes")]
    LengthMismatch,
    #[error("expected TLV type {expected:#x}, found {found:#x}")]
    UnexpectedType { expected: u64, found: u64 },
    #[error("missing field: {0}")]
    MissingField(&'static str),
    #[error("invalid value: {0}")]
    InvalidValue(&'static str),
}

pub type Result<T> = std::result::Result<T, TlvError>;

/// Encodes `n` in its shortest varnum form.
pub fn encode_varnum(n: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(9);
    write_varnum(&mut out, n);
    out
}

pub fn write_varnum(buf: &mut Vec<u8>, n: u64) {
    if n < 253 {
        buf.push(n as u8);
    } else if n <= u16::MAX as u64 {
        buf.push(0xFD);
        buf.extend_from_slice(&(n as u16).to_be_bytes());
    } else if n <= u32::MAX as u64 {
        buf.push(0xFE);
        buf.extend_from_slice(&(n as u32).to_be_bytes());
    } else {
        buf.push(0xFF);
        buf.extend_from_slice(&n.to_be_bytes());
    }
}

pub fn varnum_len(n: u64) -> usize {
    match n {
        0..=252 => 1,
        253..=0xFFFF => 3,
        0x1_0000..=0xFFFF_FFFF => 5,
        _ => 9,
    }
}

/// Decodes a varnum from the front of `bytes`, returning the value and the
/// number of bytes consumed.
pub fn decode_varnum(bytes: &[u8]) -> Result<(u64, usize)> {
    let first = *bytes.first().ok_or(TlvError::Truncated)?;
    let width = match first {
        0..=252 => return Ok((first as u64, 1)),
        0xFD => 2,
        0xFE => 4,
        _ => 8,
    };
    let body = bytes.get(1..1 + width).ok_or(TlvError::Truncated)?;
    let n = body.iter().fold(0u64, |acc, b| (acc << 8) | *b as u64);
    let min = match width {
        2 => 253,
        4 => 0x1_0000,
        _ => 0x1_0000_0000,
    };
    if n < min {
        return Err(TlvError::NonMinimalEncoding);
    }
    Ok((n, 1 + width))
}

/// Types that a decoder must understand: the low range and every odd type.
pub fn is_critical(typ: u64) -> bool {
    typ <= 31 || typ & 1 == 1
}

/// A single decoded element with an owned value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TlvElement {
    pub typ: u64,
    pub value: Vec<u8>,
}

impl TlvElement {
    pub fn new(typ: u64, value: impl Into<Vec<u8>>) -> Self {
        Self {
            typ,
            value: value.into(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        write_tlv(&mut out, self.typ, &self.value);
        out
    }

    pub fn encoded_len(&self) -> usize {
        varnum_len(self.typ) + varnum_len(self.value.len() as u64) + self.value.len()
    }

    /// Decodes exactly one element; trailing bytes are a `LengthMismatch`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut reader = Reader::new(bytes);
        let (typ, value) = reader.read()?.ok_or(TlvError::Truncated)?;
        reader.finish()?;
        Ok(Self::new(typ, value))
    }
}

pub fn write_tlv(buf: &mut Vec<u8>, typ: u64, value: &[u8]) {
    write_varnum(buf, typ);
    write_varnum(buf, value.len() as u64);
    buf.extend_from_slice(value);
}

pub fn write_nonneg(buf: &mut Vec<u8>, typ: u64, n: u64) {
    let mut value = Vec::with_capacity(9);
    write_varnum(&mut value, n);
    write_tlv(buf, typ, &value);
}

/// Wraps the bytes produced by `body` in a TLV of type `typ`.
pub fn write_nested(buf: &mut Vec<u8>, typ: u64, body: impl FnOnce(&mut Vec<u8>)) {
    let mut inner = Vec::new();
    body(&mut inner);
    write_tlv(buf, typ, &inner);
}

/// Parses a value that must consist of exactly one varnum.
pub fn parse_nonneg(value: &[u8]) -> Result<u64> {
    let (n, used) = decode_varnum(value)?;
    if used != value.len() {
        return Err(TlvError::LengthMismatch);
    }
    Ok(n)
}

/// Sequential reader over a buffer of concatenated TLV elements.
#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn remaining(&self) -> &'a [u8] {
        self.buf
    }

    pub fn peek_type(&self) -> Result<Option<u64>> {
        if self.buf.is_empty() {
            return Ok(None);
        }
        decode_varnum(self.buf).map(|(t, _)| Some(t))
    }

    /// Reads the next element, or `None` at end of input.
    pub fn read(&mut self) -> Result<Option<(u64, &'a [u8])>> {
        if self.buf.is_empty() {
            return Ok(None);
        }
        let (typ, a) = decode_varnum(self.buf)?;
        let (len, b) = decode_varnum(&self.buf[a..])?;
        let start = a + b;
        let len = usize::try_from(len).map_err(|_| TlvError::Truncated)?;
        let end = start.checked_add(len).ok_or(TlvError::Truncated)?;
        if end > self.buf.len() {
            return Err(TlvError::Truncated);
        }
        let value = &self.buf[start..end];
        self.buf = &self.buf[end..];
        Ok(Some((typ, value)))
    }

    /// Reads the next element that the caller cares about, skipping
    /// non-critical unknown elements. Unknown critical elements are errors.
    fn next_known(&mut self, known: &[u64]) -> Result<Option<(u64, &'a [u8])>> {
        loop {
            match self.read()? {
                None => return Ok(None),
                Some((t, v)) if known.contains(&t) => return Ok(Some((t, v))),
                Some((t, _)) if is_critical(t) => return Err(TlvError::UnknownTlvType(t)),
                Some((t, _)) if tags::is_assigned(t) => {
                    return Err(TlvError::UnexpectedType {
                        expected: known[0],
                        found: t,
                    })
                }
                Some(_) => continue,
            }
        }
    }

    /// Reads an element of type `typ`, failing on anything else.
    pub fn expect(&mut self, typ: u64, field: &'static str) -> Result<&'a [u8]> {
        match self.next_known(&[typ])? {
            Some((_, v)) => Ok(v),
            None => Err(TlvError::MissingField(field)),
        }
    }

    /// Reads an element of type `typ` if it is next (after skipping
    /// non-critical unknowns). Leaves the reader untouched otherwise.
    pub fn optional(&mut self, typ: u64) -> Result<Option<&'a [u8]>> {
        let saved = self.buf;
        loop {
            match self.peek_type()? {
                None => return Ok(None),
                Some(t) if t == typ => return Ok(self.read()?.map(|(_, v)| v)),
                Some(t) if !is_critical(t) && !tags::is_assigned(t) => {
                    self.read()?;
                }
                Some(_) => {
                    self.buf = saved;
                    return Ok(None);
                }
            }
        }
    }

    /// Requires that nothing but non-critical elements remain.
    pub fn finish(mut self) -> Result<()> {
        while let Some((t, _)) = self.read()? {
            if is_critical(t) {
                return Err(TlvError::LengthMismatch);
            }
        }
        Ok(())
    }
}

/// Reads a single top-level element of type `typ` that must span the whole
/// input.
pub fn read_outer(bytes: &[u8], typ: u64) -> Result<&[u8]> {
    let mut r = Reader::new(bytes);
    let (t, v) = r.read()?.ok_or(TlvError::Truncated)?;
    if t != typ {
        return Err(TlvError::UnexpectedType {
            expected: typ,
            found: t,
        });
    }
    if !r.is_empty() {
        return Err(TlvError::LengthMismatch);
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn varnum_boundaries() {
        assert_eq!(encode_varnum(0), vec![0x00]);
        assert_eq!(encode_varnum(252), vec![0xFC]);
        assert_eq!(encode_varnum(253), vec![0xFD, 0x00, 0xFD]);
        assert_eq!(encode_varnum(65535), vec![0xFD, 0xFF, 0xFF]);
        assert_eq!(encode_varnum(65536), vec![0xFE, 0x00, 0x01, 0x00, 0x00]);
        assert_eq!(encode_varnum(1 << 32).len(), 9);
    }

    #[test]
    fn varnum_decode_examples() {
        assert_eq!(decode_varnum(&[0xFC]), Ok((252, 1)));
        assert_eq!(decode_varnum(&[0xFD, 0x01, 0x00]), Ok((256, 3)));
        assert_eq!(
            decode_varnum(&[0xFD, 0x00, 0x01]),
            Err(TlvError::NonMinimalEncoding)
        );
        assert_eq!(
            decode_varnum(&[0xFE, 0x00, 0x00, 0xFF, 0xFF]),
            Err(TlvError::NonMinimalEncoding)
        );
        assert_eq!(decode_varnum(&[]), Err(TlvError::Truncated));
        assert_eq!(decode_varnum(&[0xFD, 0x01]), Err(TlvError::Truncated));
    }

    #[test]
    fn element_length_checks() {
        let e = TlvElement::new(0x15, b"abc".to_vec());
        let bytes = e.encode();
        assert_eq!(bytes, vec![0x15, 0x03, b'a', b'b', b'c']);
        assert_eq!(TlvElement::decode(&bytes), Ok(e));
        assert_eq!(TlvElement::decode(&bytes[..4]), Err(TlvError::Truncated));
        let mut extra = bytes.clone();
        extra.push(0x15);
        assert!(TlvElement::decode(&extra).is_err());
    }

    #[test]
    fn reader_skips_noncritical_only() {
        let mut buf = Vec::new();
        write_tlv(&mut buf, 0xF2, b"x"); // even, > 31: non-critical
        write_tlv(&mut buf, 0x15, b"y");
        let mut r = Reader::new(&buf);
        assert_eq!(r.expect(0x15, "content").unwrap(), b"y");

        let mut buf = Vec::new();
        write_tlv(&mut buf, 0xF3, b"x"); // odd: critical
        write_tlv(&mut buf, 0x15, b"y");
        let mut r = Reader::new(&buf);
        assert_eq!(r.expect(0x15, "content"), Err(TlvError::UnknownTlvType(0xF3)));
    }

    proptest! {
        #[test]
        fn varnum_roundtrip(n in any::<u64>()) {
            let bytes = encode_varnum(n);
            prop_assert_eq!(bytes.len(), varnum_len(n));
            prop_assert_eq!(decode_varnum(&bytes), Ok((n, bytes.len())));
        }

        #[test]
        fn element_roundtrip(typ in any::<u64>(), value in proptest::collection::vec(any::<u8>(), 0..600)) {
            let e = TlvElement::new(typ, value);
            prop_assert_eq!(TlvElement::decode(&e.encode()), Ok(e.clone()));
            prop_assert_eq!(e.encode().len(), e.encoded_len());
        }
    }
}

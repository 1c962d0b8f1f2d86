//! Hierarchical names, the naming conventions of a workspace, and name
//! patterns used by trust rules.
//!
//! Names render as `/`-separated URIs without a leading slash, e.g.
//! `MeetRoom/alice@example.com/DATA/seq=1`. Bytes outside
//! `[A-Za-z0-9@.=_-]` are percent-encoded. The empty name renders as `/`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::tlv::{self, tags, Reader, TlvError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("empty name component")]
    EmptyComponent,
    #[error("bad percent escape in {0:?}")]
    BadPercentEscape(String),
    #[error("bad pattern variable {0:?}")]
    BadVariable(String),
    #[error("{0} must start at 1")]
    ZeroCounter(&'static str),
    #[error("empty {0}")]
    EmptyField(&'static str),
}

/// One name component. Arbitrary bytes; convention components are UTF-8.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Component(Vec<u8>);

impl Component {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Self(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn as_str(&self) -> Option<&str> {
        std::str::from_utf8(&self.0).ok()
    }

    /// Parses a typed suffix such as `seq=4` or `v=2`.
    pub fn typed_number(&self, marker: &str) -> Option<u64> {
        let s = self.as_str()?;
        let digits = s.strip_prefix(marker)?.strip_prefix('=')?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if digits.len() > 1 && digits.starts_with('0') {
            return None;
        }
        digits.parse().ok()
    }

    pub fn seq(n: u64) -> Self {
        Self::from(format!("seq={n}").as_str())
    }

    pub fn version(n: u64) -> Self {
        Self::from(format!("v={n}").as_str())
    }

    pub fn segment(n: u64) -> Self {
        Self::from(format!("seg={n}").as_str())
    }

    fn parse_uri(s: &str) -> Result<Self, NameError> {
        if s.is_empty() {
            return Err(NameError::EmptyComponent);
        }
        let bytes = s.as_bytes();
        let mut out = Vec::with_capacity(bytes.len());
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'%' {
                let hex = bytes
                    .get(i + 1..i + 3)
                    .and_then(|h| std::str::from_utf8(h).ok())
                    .and_then(|h| u8::from_str_radix(h, 16).ok())
                    .ok_or_else(|| NameError::BadPercentEscape(s.to_string()))?;
                out.push(hex);
                i += 3;
            } else {
                out.push(bytes[i]);
                i += 1;
            }
        }
        Ok(Self(out))
    }
}

fn is_unreserved(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'@' | b'.' | b'=' | b'_' | b'-')
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            if is_unreserved(b) {
                write!(f, "{}", b as char)?;
            } else {
                write!(f, "%{b:02X}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl From<&str> for Component {
    fn from(s: &str) -> Self {
        Self(s.as_bytes().to_vec())
    }
}

/// An ordered list of components.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Name(Vec<Component>);

impl Name {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn from_components(components: impl IntoIterator<Item = Component>) -> Self {
        Self(components.into_iter().collect())
    }

    /// Parses a URI. A leading `/` is optional; `/` alone is the empty name.
    pub fn parse(s: &str) -> Result<Self, NameError> {
        if s == "/" {
            return Ok(Self::new());
        }
        let body = s.strip_prefix('/').unwrap_or(s);
        body.split('/')
            .map(Component::parse_uri)
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }

    pub fn components(&self) -> &[Component] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Component> {
        self.0.get(i)
    }

    pub fn last(&self) -> Option<&Component> {
        self.0.last()
    }

    pub fn push(&mut self, c: impl Into<Component>) {
        self.0.push(c.into());
    }

    /// Returns a copy with `c` appended.
    pub fn child(&self, c: impl Into<Component>) -> Self {
        let mut n = self.clone();
        n.push(c);
        n
    }

    pub fn join(&self, other: &Name) -> Self {
        let mut n = self.clone();
        n.0.extend(other.0.iter().cloned());
        n
    }

    /// The first `len` components.
    pub fn prefix(&self, len: usize) -> Self {
        Self(self.0[..len.min(self.0.len())].to_vec())
    }

    /// True iff `self` is a leading sublist of `other`.
    pub fn is_prefix_of(&self, other: &Name) -> bool {
        self.0.len() <= other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a == b)
    }

    pub fn to_uri(&self) -> String {
        self.to_string()
    }

    pub fn encode_tlv(&self, buf: &mut Vec<u8>) {
        tlv::write_nested(buf, tags::NAME, |inner| {
            for c in &self.0 {
                tlv::write_tlv(inner, tags::NAME_COMPONENT, c.as_bytes());
            }
        });
    }

    pub fn to_tlv(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.encode_tlv(&mut buf);
        buf
    }

    /// Decodes the *value* of a Name TLV.
    pub fn decode_value(value: &[u8]) -> Result<Self, TlvError> {
        let mut r = Reader::new(value);
        let mut comps = Vec::new();
        while let Some((t, v)) = r.read()? {
            match t {
                tags::NAME_COMPONENT => {
                    if v.is_empty() {
                        return Err(TlvError::InvalidValue("empty name component"));
                    }
                    comps.push(Component::new(v));
                }
                t if tlv::is_critical(t) => return Err(TlvError::UnknownTlvType(t)),
                _ => {}
            }
        }
        Ok(Self(comps))
    }

    pub fn from_tlv(bytes: &[u8]) -> Result<Self, TlvError> {
        Self::decode_value(tlv::read_outer(bytes, tags::NAME)?)
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "/");
        }
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "/")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Name({self})")
    }
}

impl FromStr for Name {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl serde::Serialize for Name {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for Name {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Name::parse(&s).map_err(serde::de::Error::custom)
    }
}

pub const DATA: &str = "DATA";
pub const KEY: &str = "KEY";
pub const INVITE: &str = "INVITE";
pub const BLOB: &str = "BLOB";
pub const SYNC: &str = "SYNC";
pub const SELF_ISSUER: &str = "self";

fn require_user(username: &str) -> Result<(), NameError> {
    if username.is_empty() {
        Err(NameError::EmptyField("username"))
    } else {
        Ok(())
    }
}

/// `<workspace>/<username>/DATA/seq=<seq>`
pub fn make_data_name(workspace: &Name, username: &str, seq: u64) -> Result<Name, NameError> {
    require_user(username)?;
    if seq == 0 {
        return Err(NameError::ZeroCounter("sequence numbers"));
    }
    Ok(workspace
        .child(username)
        .child(DATA)
        .child(Component::seq(seq)))
}

/// `<workspace>/<username>/KEY/<keyid>/<issuer>/v=<version>`. The workspace
/// may be empty, which yields a personal certificate name.
pub fn make_cert_name(
    workspace: &Name,
    username: &str,
    keyid: &str,
    issuer: &str,
    version: u64,
) -> Result<Name, NameError> {
    require_user(username)?;
    make_key_cert_name(&workspace.child(username), keyid, issuer, version)
}

/// `<identity>/KEY/<keyid>/<issuer>/v=<version>` for an arbitrary identity.
pub fn make_key_cert_name(
    identity: &Name,
    keyid: &str,
    issuer: &str,
    version: u64,
) -> Result<Name, NameError> {
    if keyid.is_empty() {
        return Err(NameError::EmptyField("keyid"));
    }
    if issuer.is_empty() {
        return Err(NameError::EmptyField("issuer"));
    }
    if version == 0 {
        return Err(NameError::ZeroCounter("versions"));
    }
    Ok(identity
        .child(KEY)
        .child(keyid)
        .child(issuer)
        .child(Component::version(version)))
}

/// `<workspace>/<inviter>/INVITE/v=<version>`
pub fn make_invite_name(workspace: &Name, inviter: &str, version: u64) -> Result<Name, NameError> {
    if inviter.is_empty() {
        return Err(NameError::EmptyField("inviter"));
    }
    if version == 0 {
        return Err(NameError::ZeroCounter("versions"));
    }
    Ok(workspace
        .child(inviter)
        .child(INVITE)
        .child(Component::version(version)))
}

/// `<workspace>/<username>/BLOB/v=<version>`
pub fn make_blob_name(workspace: &Name, username: &str, version: u64) -> Result<Name, NameError> {
    require_user(username)?;
    if version == 0 {
        return Err(NameError::ZeroCounter("versions"));
    }
    Ok(workspace
        .child(username)
        .child(BLOB)
        .child(Component::version(version)))
}

/// `<workspace>/SYNC`
pub fn sync_group_name(workspace: &Name) -> Name {
    workspace.child(SYNC)
}

/// Splits `<workspace>/<user>/DATA/seq=<n>` into `(user, n)`.
pub fn parse_data_name(workspace: &Name, name: &Name) -> Option<(String, u64)> {
    let w = workspace.len();
    if name.len() != w + 3 || !workspace.is_prefix_of(name) {
        return None;
    }
    if name.get(w + 1)?.as_bytes() != DATA.as_bytes() {
        return None;
    }
    let user = name.get(w)?.as_str()?.to_string();
    let seq = name.get(w + 2)?.typed_number("seq")?;
    Some((user, seq))
}

/// A component of a [`NamePattern`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternElem {
    Literal(Component),
    Variable(String),
}

/// Variable bindings produced by a successful match.
pub type Binding = BTreeMap<String, Component>;

/// A fixed-length name pattern. `<label>` components are variables; a label
/// that appears more than once must bind equal components everywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamePattern {
    elems: Vec<PatternElem>,
}

impl NamePattern {
    pub fn new(elems: Vec<PatternElem>) -> Self {
        Self { elems }
    }

    pub fn parse(s: &str) -> Result<Self, NameError> {
        let body = s.strip_prefix('/').unwrap_or(s);
        let elems = body
            .split('/')
            .map(|part| {
                if let Some(label) = part.strip_prefix('<') {
                    let label = label
                        .strip_suffix('>')
                        .ok_or_else(|| NameError::BadVariable(part.to_string()))?;
                    let ok = !label.is_empty()
                        && label
                            .bytes()
                            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-');
                    if !ok {
                        return Err(NameError::BadVariable(part.to_string()));
                    }
                    Ok(PatternElem::Variable(label.to_string()))
                } else {
                    Component::parse_uri(part).map(PatternElem::Literal)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { elems })
    }

    /// A pattern matching exactly `name`.
    pub fn literal(name: &Name) -> Self {
        Self {
            elems: name
                .components()
                .iter()
                .cloned()
                .map(PatternElem::Literal)
                .collect(),
        }
    }

    /// `prefix` as literals followed by the given elements.
    pub fn with_prefix(prefix: &Name, rest: &str) -> Result<Self, NameError> {
        let mut p = Self::literal(prefix);
        p.elems.extend(Self::parse(rest)?.elems);
        Ok(p)
    }

    pub fn elems(&self) -> &[PatternElem] {
        &self.elems
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.elems.iter().filter_map(|e| match e {
            PatternElem::Variable(v) => Some(v.as_str()),
            PatternElem::Literal(_) => None,
        })
    }

    /// Returns a copy with variable `from` renamed to `to`.
    pub fn rename_variable(&self, from: &str, to: &str) -> Self {
        Self {
            elems: self
                .elems
                .iter()
                .map(|e| match e {
                    PatternElem::Variable(v) if v == from => PatternElem::Variable(to.to_string()),
                    other => other.clone(),
                })
                .collect(),
        }
    }

    /// Matches `name`, extending `binding`. Returns `None` (and leaves the
    /// input binding untouched) if the name does not match.
    pub fn match_with(&self, name: &Name, binding: &Binding) -> Option<Binding> {
        if self.elems.len() != name.len() {
            return None;
        }
        let mut out = binding.clone();
        for (elem, comp) in self.elems.iter().zip(name.components()) {
            match elem {
                PatternElem::Literal(l) if l == comp => {}
                PatternElem::Literal(_) => return None,
                PatternElem::Variable(v) => match out.get(v) {
                    Some(bound) if bound != comp => return None,
                    Some(_) => {}
                    None => {
                        out.insert(v.clone(), comp.clone());
                    }
                },
            }
        }
        Some(out)
    }
}

impl fmt::Display for NamePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.elems.iter().enumerate() {
            if i > 0 {
                write!(f, "/")?;
            }
            match e {
                PatternElem::Literal(c) => write!(f, "{c}")?,
                PatternElem::Variable(v) => write!(f, "<{v}>")?,
            }
        }
        Ok(())
    }
}

/// Matches `name` against `pattern` from an empty binding.
pub fn match_pattern(pattern: &NamePattern, name: &Name) -> Option<Binding> {
    pattern.match_with(name, &Binding::new())
}

//! Trust rules: which signer names may sign which data names.
//!
//! A rule pairs a data pattern with a signer pattern. Variables with the
//! same label in both patterns must bind the same component, which is how a
//! rule says "signed by the same user".

use crate::name::{match_pattern, Name, NameError, NamePattern};
use crate::tlv::{self, tags, Reader, TlvError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("duplicate rule id {0}")]
    DuplicateId(u32),
    #[error("rule {id}: malformed pattern: {why}")]
    MalformedPattern { id: u32, why: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustRule {
    pub id: u32,
    pub data: NamePattern,
    pub signer: NamePattern,
}

impl TrustRule {
    pub fn parse(id: u32, data: &str, signer: &str) -> Result<Self, SchemaError> {
        let p = |s: &str| {
            NamePattern::parse(s).map_err(|e| SchemaError::MalformedPattern {
                id,
                why: e.to_string(),
            })
        };
        Ok(Self {
            id,
            data: p(data)?,
            signer: p(signer)?,
        })
    }

    /// The binding under which both patterns match, if any.
    pub fn admits(&self, data: &Name, signer: &Name) -> bool {
        match_pattern(&self.data, data)
            .and_then(|b| self.signer.match_with(signer, &b))
            .is_some()
    }
}

#[derive(Serialize, Deserialize)]
struct RuleJson {
    id: u32,
    data: String,
    signer: String,
}

impl Serialize for TrustRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RuleJson {
            id: self.id,
            data: self.data.to_string(),
            signer: self.signer.to_string(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TrustRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = RuleJson::deserialize(d)?;
        TrustRule::parse(j.id, &j.data, &j.signer).map_err(serde::de::Error::custom)
    }
}

/// A compiled, duplicate-free rule set. An empty schema admits nothing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrustSchema {
    rules: Vec<TrustRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct PolicyViolation {
    pub data: Name,
    pub signer: Name,
    /// Rules whose data pattern matched but whose signer pattern did not.
    pub candidate_rules: Vec<u32>,
}

impl fmt::Display for PolicyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} may not be signed by {}", self.data, self.signer)?;
        if self.candidate_rules.is_empty() {
            write!(f, " (no rule covers the data name)")
        } else {
            write!(f, " (rules {:?} cover the data name)", self.candidate_rules)
        }
    }
}

pub fn compile_schema(rules: Vec<TrustRule>) -> Result<TrustSchema, SchemaError> {
    let mut ids = BTreeSet::new();
    for r in &rules {
        if !ids.insert(r.id) {
            return Err(SchemaError::DuplicateId(r.id));
        }
        if r.data.is_empty() || r.signer.is_empty() {
            return Err(SchemaError::MalformedPattern {
                id: r.id,
                why: "empty pattern".into(),
            });
        }
    }
    Ok(TrustSchema { rules })
}

/// Returns the id of the first rule admitting the pair.
pub fn check_policy(schema: &TrustSchema, data: &Name, signer: &Name) -> Result<u32, PolicyViolation> {
    schema.check(data, signer)
}

impl TrustSchema {
    pub fn rules(&self) -> &[TrustRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn check(&self, data: &Name, signer: &Name) -> Result<u32, PolicyViolation> {
        let mut candidates = Vec::new();
        for r in &self.rules {
            let Some(b) = match_pattern(&r.data, data) else {
                continue;
            };
            if r.signer.match_with(signer, &b).is_some() {
                return Ok(r.id);
            }
            candidates.push(r.id);
        }
        Err(PolicyViolation {
            data: data.clone(),
            signer: signer.clone(),
            candidate_rules: candidates,
        })
    }

    /// `Schema { SchemaRule { SeqNum id, Content data, Content signer } * }`
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        tlv::write_nested(&mut out, tags::SCHEMA, |b| {
            for r in &self.rules {
                tlv::write_nested(b, tags::SCHEMA_RULE, |rb| {
                    tlv::write_nonneg(rb, tags::SEQ_NUM, r.id.into());
                    tlv::write_tlv(rb, tags::CONTENT, r.data.to_string().as_bytes());
                    tlv::write_tlv(rb, tags::CONTENT, r.signer.to_string().as_bytes());
                });
            }
        });
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TlvError> {
        let mut r = Reader::new(tlv::read_outer(bytes, tags::SCHEMA)?);
        let mut rules = Vec::new();
        while r.peek_type()?.is_some() {
            let mut rr = Reader::new(r.expect(tags::SCHEMA_RULE, "SchemaRule")?);
            let id = u32::try_from(tlv::parse_nonneg(rr.expect(tags::SEQ_NUM, "rule id")?)?)
                .map_err(|_| TlvError::InvalidValue("rule id"))?;
            let text = |v: &[u8]| std::str::from_utf8(v).map(str::to_owned).map_err(|_| TlvError::InvalidValue("pattern"));
            let data = text(rr.expect(tags::CONTENT, "data pattern")?)?;
            let signer = text(rr.expect(tags::CONTENT, "signer pattern")?)?;
            rr.finish()?;
            rules.push(TrustRule::parse(id, &data, &signer).map_err(|_| TlvError::InvalidValue("pattern"))?);
        }
        compile_schema(rules).map_err(|_| TlvError::InvalidValue("schema"))
    }
}

fn under(prefix: &Name, rest: &str) -> Result<NamePattern, NameError> {
    NamePattern::with_prefix(prefix, rest)
}

/// The four base rules for workspace `ws`:
///
/// 1. the workspace instance certificate is signed by the root certificate,
/// 2. a member's workspace certificate is signed by that member's personal key,
/// 3. invitations are signed by the inviter's workspace certificate,
/// 4. publications are signed by the publisher's own workspace certificate.
pub fn fig3_rules(ws: &Name, root_cert: &Name) -> Result<Vec<TrustRule>, NameError> {
    Ok(vec![
        TrustRule {
            id: 1,
            data: under(ws, "KEY/<kid>/<issuer>/<ver>")?,
            signer: NamePattern::literal(root_cert),
        },
        TrustRule {
            id: 2,
            data: under(ws, "<user>/KEY/<kid>/<issuer>/<ver>")?,
            signer: NamePattern::parse("<user>/KEY/<pkid>/<pissuer>/<pver>")?,
        },
        TrustRule {
            id: 3,
            data: under(ws, "<user>/INVITE/<ver>")?,
            signer: under(ws, "<user>/KEY/<kid>/<issuer>/<cver>")?,
        },
        TrustRule {
            id: 4,
            data: under(ws, "<user>/DATA/<seq>")?,
            signer: under(ws, "<user>/KEY/<kid>/<issuer>/<cver>")?,
        },
    ])
}

/// Who may admit new members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MembershipModel {
    InitiatorOnly,
    PeerToPeer,
}

impl MembershipModel {
    pub fn code(self) -> u64 {
        match self {
            MembershipModel::InitiatorOnly => 0,
            MembershipModel::PeerToPeer => 1,
        }
    }

    pub fn from_code(c: u64) -> Option<Self> {
        match c {
            0 => Some(MembershipModel::InitiatorOnly),
            1 => Some(MembershipModel::PeerToPeer),
            _ => None,
        }
    }
}

/// The base rules plus what a running workspace needs on top of them:
///
/// 5. blob segments are signed by the publisher's workspace certificate,
/// 6. a member's endorsement (personal key certified for the workspace) is
///    signed by the inviter's workspace certificate; under
///    [`MembershipModel::InitiatorOnly`] the inviter must be the initiator,
/// 7. the initiator's endorsement is signed by the instance certificate.
pub fn workspace_rules(
    ws: &Name,
    root_cert: &Name,
    model: MembershipModel,
    initiator: &str,
) -> Result<Vec<TrustRule>, NameError> {
    let mut rules = fig3_rules(ws, root_cert)?;
    let init = crate::name::Component::from(initiator).to_string();
    let endorser = match model {
        MembershipModel::PeerToPeer => "<inviter>".to_string(),
        MembershipModel::InitiatorOnly => init.clone(),
    };
    rules.push(TrustRule {
        id: 5,
        data: under(ws, "<user>/BLOB/<ver>/<seg>")?,
        signer: under(ws, "<user>/KEY/<kid>/<issuer>/<cver>")?,
    });
    rules.push(TrustRule {
        id: 6,
        data: NamePattern::parse(&format!("<member>/KEY/<pkid>/{endorser}/<ver>"))?,
        signer: under(ws, &format!("{endorser}/KEY/<kid>/<issuer>/<cver>"))?,
    });
    rules.push(TrustRule {
        id: 7,
        data: NamePattern::parse(&format!("{init}/KEY/<pkid>/<issuer>/<ver>"))?,
        signer: under(ws, "KEY/<kid>/<iissuer>/<iver>")?,
    });
    Ok(rules)
}

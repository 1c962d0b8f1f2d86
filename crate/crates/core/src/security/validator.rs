//! Signature, policy and validity checks along a certificate chain.

use super::cert::{verify_signature, Certificate};
use super::schema::{PolicyViolation, TrustSchema};
use super::store::CertStore;
use crate::name::Name;
use crate::packet::DataPacket;
use thiserror::Error;

pub const DEFAULT_MAX_CHAIN: usize = 8;
/// Tolerated clock lead of a signer, in ms.
pub const DEFAULT_CLOCK_SKEW_MS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    /// The named certificate is not in the store yet. Fetch it and retry.
    #[error("missing certificate {0}")]
    MissingCert(Name),
    #[error("bad signature on {0}")]
    BadSignature(Name),
    #[error("{0} is outside its signer's validity period")]
    TimeInvalid(Name),
    #[error("policy violation: {0}")]
    PolicyViolation(PolicyViolation),
    #[error("chain ends at {0}, which is not a trust anchor")]
    NotAnchored(Name),
    #[error("certificate chain too long")]
    ChainTooLong,
}

impl ValidationError {
    /// Whether retrying after fetching more certificates could succeed.
    pub fn is_pending(&self) -> bool {
        matches!(self, ValidationError::MissingCert(_))
    }
}

/// Single-hop result, see [`verify_data`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyOutcome {
    Ok,
    BadSignature,
    UnknownCert,
    TimeInvalid,
}

/// Checks `p` against the certificate its key locator names, at time `now`.
pub fn verify_data(p: &DataPacket, store: &CertStore, now: u64) -> VerifyOutcome {
    let Some(cert) = store.get(p.key_locator()) else {
        return VerifyOutcome::UnknownCert;
    };
    if !cert.validity().covers(now) {
        return VerifyOutcome::TimeInvalid;
    }
    if verify_signature(p, cert.public_key()) {
        VerifyOutcome::Ok
    } else {
        VerifyOutcome::BadSignature
    }
}

/// Full validation: every link from the packet to a trust anchor must carry
/// a good signature, satisfy the schema and have a signer that was valid when
/// the packet was signed.
///
/// The signing time is the packet's `notBefore`. Checking validity at that
/// instant rather than at arrival keeps a member's expiry from revoking what
/// they published while still a member. A signer could backdate, so times
/// ahead of `now` by more than the skew allowance are refused, but times in
/// the past are trusted.
#[derive(Debug, Clone)]
pub struct Validator {
    pub schema: TrustSchema,
    pub max_chain: usize,
    pub skew_ms: u64,
}

impl Validator {
    pub fn new(schema: TrustSchema) -> Self {
        Self {
            schema,
            max_chain: DEFAULT_MAX_CHAIN,
            skew_ms: DEFAULT_CLOCK_SKEW_MS,
        }
    }

    /// On success returns the certificate chain, nearest signer first.
    pub fn validate(
        &self,
        store: &mut CertStore,
        packet: &DataPacket,
        now: u64,
    ) -> Result<Vec<Name>, ValidationError> {
        let at = packet.validity().not_before;
        if at > now.saturating_add(self.skew_ms) {
            return Err(ValidationError::TimeInvalid(packet.name.clone()));
        }
        let mut chain: Vec<Name> = Vec::new();
        let mut fresh: Vec<Name> = Vec::new();
        let mut cur = packet.clone();
        // Signature and policy of `cur` already established?
        let mut cur_checked = false;
        loop {
            let signer_name = cur.key_locator().clone();
            if chain.len() >= self.max_chain {
                return Err(ValidationError::ChainTooLong);
            }
            if signer_name == cur.name && !store.is_anchor(&cur.name) {
                return Err(ValidationError::NotAnchored(cur.name.clone()));
            }
            let signer: &Certificate = store
                .get(&signer_name)
                .ok_or_else(|| ValidationError::MissingCert(signer_name.clone()))?;
            if !signer.validity().covers(at) {
                return Err(ValidationError::TimeInvalid(cur.name.clone()));
            }
            if !cur_checked {
                self.schema
                    .check(&cur.name, &signer_name)
                    .map_err(ValidationError::PolicyViolation)?;
                if !verify_signature(&cur, signer.public_key()) {
                    return Err(ValidationError::BadSignature(cur.name.clone()));
                }
            }
            chain.push(signer_name.clone());
            if store.is_anchor(&signer_name) {
                break;
            }
            cur_checked = store.is_validated(&signer_name);
            if !cur_checked {
                fresh.push(signer_name.clone());
            }
            cur = signer.packet().clone();
        }
        for n in &fresh {
            store.mark_validated(n);
        }
        Ok(chain)
    }
}

//! Workspace creation, invitations, member bootstrap, renewal and expiry.
//!
//! Certificate chain of a member invited by Bob, nearest first:
//!
//! ```text
//! <ws>/alice/KEY/<wk>/alice/v=k         workspace key, signed by Alice's personal key
//! alice/KEY/<pk>/bob/v=n                Alice's personal key, endorsed by Bob
//! <ws>/bob/KEY/<wk>/bob/v=j             Bob's workspace key
//! bob/KEY/<pk>/<ws-label>/v=1           Bob (initiator), endorsed by the instance key
//! <ws>/KEY/<ik>/<root-label>/v=1        instance certificate
//! <root>/KEY/<rk>/self/v=1              configured trust anchor
//! ```
//!
//! The endorsement carries the invitation lifetime and the workspace
//! certificate copies it, so a member lapses when the invitation does.

use crate::name::{self, Name, NameError};
use crate::packet::{ContentType, DataPacket, Validity};
use crate::security::{
    self, compile_schema, issue_cert, workspace_rules, wrap_group_key, CertError,
    CertStore, Certificate, GroupKey, KeyPair, MembershipModel, PublicKey, TrustSchema, Validator,
};
use crate::tlv::{self, tags, Reader, TlvError};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

/// Thirty days in ms.
pub const DEFAULT_INVITATION_LIFETIME_MS: u64 = 30 * 24 * 3600 * 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MembershipError {
    #[error("invitation invalid: {0}")]
    InvitationInvalid(String),
    #[error("invitation is addressed to someone else")]
    WrongInvitee,
    #[error("invitation expired")]
    Expired,
    #[error("not authorized: {0}")]
    NotAuthorized(String),
    #[error("unknown member {0}")]
    UnknownMember(String),
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error(transparent)]
    Name(#[from] NameError),
}

fn invalid(e: impl std::fmt::Display) -> MembershipError {
    MembershipError::InvitationInvalid(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MembershipStatus {
    Active,
    Expired,
    Unknown,
}

/// What an inviter remembers about someone they invited.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberRecord {
    pub username: String,
    /// Learned once the member publishes; the inviter can't predict it.
    pub workspace_cert_name: Option<Name>,
    pub latest_invitation_version: u64,
    pub valid_until: u64,
    pub personal_key: PublicKey,
    pub endorsement_version: u64,
}

pub fn membership_status(
    records: &BTreeMap<String, MemberRecord>,
    username: &str,
    now: u64,
) -> MembershipStatus {
    match records.get(username) {
        None => MembershipStatus::Unknown,
        Some(r) if now <= r.valid_until => MembershipStatus::Active,
        Some(_) => MembershipStatus::Expired,
    }
}

/// The state held by whoever created the workspace: the instance key pair
/// plus everything a member needs.
#[derive(Debug, Clone)]
pub struct WorkspaceInstance {
    pub name: Name,
    pub instance_key: KeyPair,
    pub instance_cert: Certificate,
    pub root_cert: Certificate,
    pub group_key: GroupKey,
    pub schema: TrustSchema,
    pub model: MembershipModel,
    pub initiator: String,
}

pub fn group_key_name(ws: &Name) -> Name {
    ws.child("GK").child(name::Component::version(1))
}

pub fn create_workspace<R: RngCore + CryptoRng>(
    ws: &Name,
    root_key: &KeyPair,
    root_cert: &Certificate,
    model: MembershipModel,
    initiator: &str,
    rng: &mut R,
) -> Result<WorkspaceInstance, MembershipError> {
    let instance_key = KeyPair::random(rng);
    let instance_cert = issue_cert(
        root_key,
        root_cert.name(),
        &instance_key.public_key(),
        ws,
        1,
        Validity::new(0, u64::MAX).expect("ordered"),
    )?;
    let schema = compile_schema(workspace_rules(ws, root_cert.name(), model, initiator)?)
        .expect("built-in rules are well formed");
    Ok(WorkspaceInstance {
        name: ws.clone(),
        instance_key,
        instance_cert,
        root_cert: root_cert.clone(),
        group_key: GroupKey::generate(group_key_name(ws), rng),
        schema,
        model,
        initiator: initiator.to_string(),
    })
}

impl WorkspaceInstance {
    /// Member state for the initiator, endorsed directly by the instance key.
    pub fn initiator_state(
        &self,
        personal_key: &KeyPair,
        now: u64,
        lifetime: u64,
    ) -> Result<MemberState, MembershipError> {
        let endorsement = issue_cert(
            &self.instance_key,
            self.instance_cert.name(),
            &personal_key.public_key(),
            &Name::new().child(self.initiator.as_str()),
            1,
            Validity::starting_at(now, lifetime),
        )?;
        let inv = Invitation {
            packet: None,
            instance_cert: self.instance_cert.clone(),
            invitee_cert: endorsement,
            wrapped_key: Vec::new(),
            schema: self.schema.clone(),
            inviter_chain: vec![self.instance_cert.clone()],
            model: self.model,
            initiator: self.initiator.clone(),
        };
        let mut st = MemberState::empty(&self.initiator, &self.name, personal_key, &inv, self.group_key.clone(), &self.root_cert);
        st.install(&inv)?;
        Ok(st)
    }
}

/// Decoded invitation content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invitation {
    /// `None` only for the initiator's implicit self-invitation.
    pub packet: Option<DataPacket>,
    pub instance_cert: Certificate,
    /// The invitee's personal key, certified by the inviter.
    pub invitee_cert: Certificate,
    pub wrapped_key: Vec<u8>,
    pub schema: TrustSchema,
    /// Inviter's workspace certificate up to the instance certificate.
    pub inviter_chain: Vec<Certificate>,
    pub model: MembershipModel,
    pub initiator: String,
}

fn decode_cert(v: &[u8]) -> Result<Certificate, MembershipError> {
    Certificate::decode(v).map_err(invalid)
}

impl Invitation {
    pub fn encode_content(&self) -> Vec<u8> {
        let mut out = Vec::new();
        tlv::write_tlv(&mut out, tags::INSTANCE_CERT, &self.instance_cert.encode());
        tlv::write_tlv(&mut out, tags::INVITEE_CERT, &self.invitee_cert.encode());
        tlv::write_tlv(&mut out, tags::WRAPPED_KEY, &self.wrapped_key);
        out.extend(self.schema.encode());
        tlv::write_nested(&mut out, tags::INVITER_CHAIN, |b| {
            for c in &self.inviter_chain {
                b.extend(c.encode());
            }
        });
        tlv::write_nonneg(&mut out, tags::MEMBERSHIP_MODEL, self.model.code());
        tlv::write_tlv(&mut out, tags::INITIATOR, self.initiator.as_bytes());
        out
    }

    pub fn decode(packet: &DataPacket) -> Result<Self, MembershipError> {
        if packet.content_type != ContentType::Invite {
            return Err(invalid("content type is not INVITE"));
        }
        let mut r = Reader::new(&packet.content);
        let t = |e: TlvError| invalid(e);
        let instance_cert = decode_cert(r.expect(tags::INSTANCE_CERT, "instance cert").map_err(t)?)?;
        let invitee_cert = decode_cert(r.expect(tags::INVITEE_CERT, "invitee cert").map_err(t)?)?;
        let wrapped_key = r.expect(tags::WRAPPED_KEY, "wrapped key").map_err(t)?.to_vec();
        let schema_v = r.expect(tags::SCHEMA, "schema").map_err(t)?;
        let mut schema_tlv = Vec::new();
        tlv::write_tlv(&mut schema_tlv, tags::SCHEMA, schema_v);
        let schema = TrustSchema::decode(&schema_tlv).map_err(t)?;
        let mut chain_r = Reader::new(r.expect(tags::INVITER_CHAIN, "inviter chain").map_err(t)?);
        let mut inviter_chain = Vec::new();
        while let Some((typ, v)) = chain_r.read().map_err(t)? {
            if typ != tags::DATA {
                return Err(invalid("inviter chain holds a non-Data element"));
            }
            let mut enc = Vec::new();
            tlv::write_tlv(&mut enc, tags::DATA, v);
            inviter_chain.push(decode_cert(&enc)?);
        }
        let model = MembershipModel::from_code(
            tlv::parse_nonneg(r.expect(tags::MEMBERSHIP_MODEL, "model").map_err(t)?).map_err(t)?,
        )
        .ok_or_else(|| invalid("unknown membership model"))?;
        let initiator = String::from_utf8(r.expect(tags::INITIATOR, "initiator").map_err(t)?.to_vec())
            .map_err(|_| invalid("initiator is not UTF-8"))?;
        r.finish().map_err(t)?;
        Ok(Self {
            packet: Some(packet.clone()),
            instance_cert,
            invitee_cert,
            wrapped_key,
            schema,
            inviter_chain,
            model,
            initiator,
        })
    }

    /// `<ws>/<inviter>/INVITE/v=<n>` split into its workspace prefix.
    fn workspace(&self) -> Result<Name, MembershipError> {
        let p = self.packet.as_ref().ok_or_else(|| invalid("no packet"))?;
        let n = p.name.len();
        if n < 4 || p.name.get(n - 2).map(|c| c.as_bytes()) != Some(name::INVITE.as_bytes()) {
            return Err(invalid("not an invitation name"));
        }
        Ok(p.name.prefix(n - 3))
    }
}

/// Everything one member holds about its own membership.
#[derive(Debug, Clone)]
pub struct MemberState {
    pub username: String,
    pub workspace: Name,
    personal_key: KeyPair,
    pub workspace_key: KeyPair,
    pub workspace_cert: Certificate,
    pub endorsement: Certificate,
    /// Certificates from the endorsement's signer up to the instance cert.
    pub upstream: Vec<Certificate>,
    pub group_key: GroupKey,
    pub schema: TrustSchema,
    pub model: MembershipModel,
    pub initiator: String,
    pub anchor: Certificate,
    /// Invitations this member has accepted, by name.
    pub accepted: Vec<Name>,
    /// Next `INVITE` version this member will use.
    invite_version: u64,
    /// People this member invited.
    pub records: BTreeMap<String, MemberRecord>,
}

impl PartialEq for MemberState {
    fn eq(&self, o: &Self) -> bool {
        self.username == o.username
            && self.workspace == o.workspace
            && self.personal_key.public_key() == o.personal_key.public_key()
            && self.workspace_key.public_key() == o.workspace_key.public_key()
            && self.workspace_cert == o.workspace_cert
            && self.endorsement == o.endorsement
            && self.upstream == o.upstream
            && self.group_key == o.group_key
            && self.schema == o.schema
            && self.model == o.model
            && self.initiator == o.initiator
            && self.accepted == o.accepted
            && self.invite_version == o.invite_version
            && self.records == o.records
    }
}

/// The workspace key is a function of the personal key and workspace, so
/// accepting an invitation again yields the same key.
fn derive_workspace_key(personal: &KeyPair, ws: &Name) -> KeyPair {
    let mut h = Sha256::new();
    h.update(b"wksp/member-key");
    h.update(personal.private_key());
    h.update(ws.to_tlv());
    KeyPair::from_seed(h.finalize().into())
}

impl MemberState {
    fn empty(
        username: &str,
        ws: &Name,
        personal_key: &KeyPair,
        inv: &Invitation,
        group_key: GroupKey,
        anchor: &Certificate,
    ) -> Self {
        let workspace_key = derive_workspace_key(personal_key, ws);
        Self {
            username: username.to_string(),
            workspace: ws.clone(),
            personal_key: personal_key.clone(),
            workspace_key,
            // Replaced by install().
            workspace_cert: inv.invitee_cert.clone(),
            endorsement: inv.invitee_cert.clone(),
            upstream: Vec::new(),
            group_key,
            schema: inv.schema.clone(),
            model: inv.model,
            initiator: inv.initiator.clone(),
            anchor: anchor.clone(),
            accepted: Vec::new(),
            invite_version: 1,
            records: BTreeMap::new(),
        }
    }

    /// Issues a fresh workspace certificate under the invitation's
    /// endorsement.
    fn install(&mut self, inv: &Invitation) -> Result<(), MembershipError> {
        let version = if self.accepted.is_empty() && self.upstream.is_empty() {
            1
        } else {
            self.workspace_cert.version().unwrap_or(0) + 1
        };
        let identity = self.workspace.child(self.username.as_str());
        self.workspace_cert = issue_cert(
            &self.personal_key,
            inv.invitee_cert.name(),
            &self.workspace_key.public_key(),
            &identity,
            version,
            inv.invitee_cert.validity(),
        )?;
        self.endorsement = inv.invitee_cert.clone();
        self.upstream = inv.inviter_chain.clone();
        if let Some(p) = &inv.packet {
            self.accepted.push(p.name.clone());
        }
        Ok(())
    }

    pub fn personal_key(&self) -> &KeyPair {
        &self.personal_key
    }

    /// The certificates a validator needs for this member's publications,
    /// nearest first, ending at the instance certificate.
    pub fn cert_chain(&self) -> Vec<Certificate> {
        let mut v = vec![self.workspace_cert.clone(), self.endorsement.clone()];
        v.extend(self.upstream.iter().cloned());
        v
    }

    pub fn valid_until(&self) -> u64 {
        self.workspace_cert.validity().not_after
    }

    pub fn is_active(&self, now: u64) -> bool {
        self.workspace_cert.validity().covers(now)
    }

    pub fn validator(&self) -> Validator {
        Validator::new(self.schema.clone())
    }

    /// A store holding the anchor and this member's own chain.
    pub fn cert_store(&self) -> CertStore {
        let mut s = CertStore::new();
        s.add_anchor(self.anchor.clone());
        for c in self.cert_chain() {
            s.insert(c);
        }
        s
    }

    /// Signs with the workspace key.
    pub fn sign(&self, p: DataPacket) -> DataPacket {
        security::sign_data(p, &self.workspace_key, self.workspace_cert.name())
    }

    /// Accepts a further invitation (typically a renewal). Returns whether
    /// anything changed; an invitation seen before is a no-op.
    pub fn accept(&mut self, invitation: &DataPacket, now: u64) -> Result<bool, MembershipError> {
        if self.accepted.contains(&invitation.name) {
            return Ok(false);
        }
        let inv = check_invitation(&self.username, &self.personal_key, invitation, &self.anchor, now)?;
        if inv.workspace()? != self.workspace {
            return Err(invalid("invitation is for another workspace"));
        }
        let gk = security::unwrap_group_key(&inv.wrapped_key, &self.personal_key).map_err(invalid)?;
        self.group_key = gk;
        self.schema = inv.schema.clone();
        self.install(&inv)?;
        Ok(true)
    }

    /// Invites the holder of `invitee_personal` (a certificate naming their
    /// personal identity, usually self-signed) for `lifetime` ms from `now`.
    pub fn create_invitation<R: RngCore + CryptoRng>(
        &mut self,
        invitee_personal: &Certificate,
        lifetime: u64,
        now: u64,
        rng: &mut R,
    ) -> Result<DataPacket, MembershipError> {
        let username = invitee_personal
            .identity()
            .last()
            .and_then(|c| c.as_str().map(str::to_owned))
            .ok_or_else(|| MembershipError::NotAuthorized("invitee identity is not a username".into()))?;
        self.issue_invitation(&username, *invitee_personal.public_key(), lifetime, now, rng)
    }

    /// A new invitation version for someone invited before.
    pub fn renew_invitation<R: RngCore + CryptoRng>(
        &mut self,
        username: &str,
        lifetime: u64,
        now: u64,
        rng: &mut R,
    ) -> Result<DataPacket, MembershipError> {
        let key = self
            .records
            .get(username)
            .map(|r| r.personal_key)
            .ok_or_else(|| MembershipError::UnknownMember(username.to_string()))?;
        self.issue_invitation(username, key, lifetime, now, rng)
    }

    fn issue_invitation<R: RngCore + CryptoRng>(
        &mut self,
        username: &str,
        invitee_key: PublicKey,
        lifetime: u64,
        now: u64,
        rng: &mut R,
    ) -> Result<DataPacket, MembershipError> {
        if self.model == MembershipModel::InitiatorOnly && self.username != self.initiator {
            return Err(MembershipError::NotAuthorized(format!(
                "only {} may invite in this workspace",
                self.initiator
            )));
        }
        if !self.is_active(now) {
            return Err(MembershipError::NotAuthorized(format!("{} is not active", self.username)));
        }
        let validity = Validity::starting_at(now, lifetime);
        let endorsement_version = self.records.get(username).map_or(0, |r| r.endorsement_version) + 1;
        let endorsement = issue_cert(
            &self.workspace_key,
            self.workspace_cert.name(),
            &invitee_key,
            &Name::new().child(username),
            endorsement_version,
            validity,
        )?;
        let wrapped = wrap_group_key(&self.group_key, &invitee_key, rng).map_err(invalid)?;
        let mut chain = vec![self.workspace_cert.clone(), self.endorsement.clone()];
        chain.extend(self.upstream.iter().cloned());
        let instance_cert = self
            .upstream
            .last()
            .cloned()
            .ok_or_else(|| invalid("member has no instance certificate"))?;
        let inv = Invitation {
            packet: None,
            instance_cert,
            invitee_cert: endorsement,
            wrapped_key: wrapped,
            schema: self.schema.clone(),
            inviter_chain: chain,
            model: self.model,
            initiator: self.initiator.clone(),
        };
        let version = self.invite_version;
        let inv_name = name::make_invite_name(&self.workspace, &self.username, version)?;
        let packet = self.sign(DataPacket::unsigned(
            inv_name,
            ContentType::Invite,
            inv.encode_content(),
            validity,
        ));
        self.invite_version += 1;
        let rec = self.records.entry(username.to_string()).or_insert(MemberRecord {
            username: username.to_string(),
            workspace_cert_name: None,
            latest_invitation_version: 0,
            valid_until: 0,
            personal_key: invitee_key,
            endorsement_version: 0,
        });
        rec.latest_invitation_version = version;
        rec.endorsement_version = endorsement_version;
        rec.valid_until = rec.valid_until.max(validity.not_after);
        rec.personal_key = invitee_key;
        Ok(packet)
    }
}

/// Decodes and validates an invitation addressed to `email`.
fn check_invitation(
    email: &str,
    personal_key: &KeyPair,
    packet: &DataPacket,
    anchor: &Certificate,
    now: u64,
) -> Result<Invitation, MembershipError> {
    let inv = Invitation::decode(packet)?;
    if inv.invitee_cert.identity() != Name::new().child(email)
        || inv.invitee_cert.public_key() != &personal_key.public_key()
    {
        return Err(MembershipError::WrongInvitee);
    }
    if now > packet.validity().not_after {
        return Err(MembershipError::Expired);
    }
    if !packet.validity().covers(now) {
        return Err(invalid("not yet valid"));
    }
    let ws = inv.workspace()?;
    if inv.instance_cert.identity() != ws {
        return Err(invalid("instance certificate is for another workspace"));
    }
    let mut store = CertStore::new();
    store.add_anchor(anchor.clone());
    store.insert(inv.instance_cert.clone());
    for c in &inv.inviter_chain {
        store.insert(c.clone());
    }
    let v = Validator::new(inv.schema.clone());
    v.validate(&mut store, packet, now).map_err(invalid)?;
    // The endorsement must chain too, and be signed by the same inviter.
    v.validate(&mut store, inv.invitee_cert.packet(), now).map_err(invalid)?;
    let inviter = inv.inviter_chain.first().ok_or_else(|| invalid("empty inviter chain"))?;
    if inv.invitee_cert.key_locator() != inviter.name() || packet.key_locator() != inviter.name() {
        return Err(invalid("endorsement and invitation signed by different certificates"));
    }
    Ok(inv)
}

/// Turns an invitation into member state for `email`.
pub fn bootstrap_member(
    email: &str,
    personal_key: &KeyPair,
    invitation: &DataPacket,
    anchor: &Certificate,
    now: u64,
) -> Result<MemberState, MembershipError> {
    let inv = check_invitation(email, personal_key, invitation, anchor, now)?;
    let ws = inv.workspace()?;
    let gk = security::unwrap_group_key(&inv.wrapped_key, personal_key).map_err(invalid)?;
    let mut st = MemberState::empty(email, &ws, personal_key, &inv, gk, anchor);
    st.install(&inv)?;
    Ok(st)
}

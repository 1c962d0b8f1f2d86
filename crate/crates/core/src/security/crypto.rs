//! Content encryption under the workspace group key, and sealed-box wrapping
//! of that key to a member's public key.

use super::keys::{KeyPair, PublicKey};
use crate::name::Name;
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{XChaCha20Poly1305, XNonce};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

const NONCE_LEN: usize = 24;
const WRAP_LABEL: &[u8] = b"wksp/wrap-group-key";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("authentication failed")]
    AuthFailure,
    #[error("ciphertext too short")]
    Truncated,
    #[error("key cannot be used for key agreement")]
    BadKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CipherSuite {
    XChaCha20Poly1305,
}

/// Symmetric key shared by all members of a workspace.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupKey {
    pub key_id: Name,
    key: [u8; 32],
}

impl std::fmt::Debug for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GroupKey({})", self.key_id)
    }
}

impl GroupKey {
    pub fn new(key_id: Name, key: [u8; 32]) -> Self {
        Self { key_id, key }
    }

    pub fn generate<R: RngCore + CryptoRng>(key_id: Name, rng: &mut R) -> Self {
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        Self { key_id, key }
    }

    pub fn suite(&self) -> CipherSuite {
        CipherSuite::XChaCha20Poly1305
    }

    pub fn key_bytes(&self) -> &[u8; 32] {
        &self.key
    }

    /// `nonce || ciphertext`. The key id is bound as associated data.
    pub fn encrypt<R: RngCore + CryptoRng>(&self, plaintext: &[u8], rng: &mut R) -> Vec<u8> {
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        seal(&self.key, &nonce, &self.key_id.to_tlv(), plaintext)
    }

    pub fn decrypt(&self, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        open(&self.key, &self.key_id.to_tlv(), ciphertext)
    }
}

fn seal(key: &[u8; 32], nonce: &[u8; NONCE_LEN], aad: &[u8], msg: &[u8]) -> Vec<u8> {
    let cipher = XChaCha20Poly1305::new(key.into());
    let ct = cipher
        .encrypt(XNonce::from_slice(nonce), Payload { msg, aad })
        .expect("in-memory encryption cannot fail");
    let mut out = Vec::with_capacity(NONCE_LEN + ct.len());
    out.extend_from_slice(nonce);
    out.extend_from_slice(&ct);
    out
}

fn open(key: &[u8; 32], aad: &[u8], data: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if data.len() < NONCE_LEN {
        return Err(CryptoError::Truncated);
    }
    let (nonce, ct) = data.split_at(NONCE_LEN);
    XChaCha20Poly1305::new(key.into())
        .decrypt(XNonce::from_slice(nonce), Payload { msg: ct, aad })
        .map_err(|_| CryptoError::AuthFailure)
}

pub fn encrypt_content<R: RngCore + CryptoRng>(gk: &GroupKey, plaintext: &[u8], rng: &mut R) -> Vec<u8> {
    gk.encrypt(plaintext, rng)
}

pub fn decrypt_content(gk: &GroupKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    gk.decrypt(ciphertext)
}

fn wrap_key(shared: &[u8; 32], eph: &[u8; 32], recipient: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(WRAP_LABEL);
    h.update(shared);
    h.update(eph);
    h.update(recipient);
    h.finalize().into()
}

/// Ephemeral X25519 agreement with the member's key, then AEAD.
/// Layout: `ephemeral public (32) || nonce (24) || ciphertext`.
pub fn wrap_group_key<R: RngCore + CryptoRng>(
    gk: &GroupKey,
    member: &PublicKey,
    rng: &mut R,
) -> Result<Vec<u8>, CryptoError> {
    let recipient = member.to_x25519().ok_or(CryptoError::BadKey)?;
    let mut eph_bytes = [0u8; 32];
    rng.fill_bytes(&mut eph_bytes);
    let eph = x25519_dalek::StaticSecret::from(eph_bytes);
    let eph_pub = x25519_dalek::PublicKey::from(&eph);
    let shared = eph.diffie_hellman(&recipient);
    if !shared.was_contributory() {
        return Err(CryptoError::BadKey);
    }
    let k = wrap_key(shared.as_bytes(), eph_pub.as_bytes(), recipient.as_bytes());
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let mut msg = gk.key_id.to_tlv();
    msg.extend_from_slice(&gk.key);
    let mut out = eph_pub.as_bytes().to_vec();
    out.extend(seal(&k, &nonce, WRAP_LABEL, &msg));
    Ok(out)
}

pub fn unwrap_group_key(wrapped: &[u8], member: &KeyPair) -> Result<GroupKey, CryptoError> {
    if wrapped.len() < 32 {
        return Err(CryptoError::Truncated);
    }
    let (eph, rest) = wrapped.split_at(32);
    let eph: [u8; 32] = eph.try_into().expect("split at 32");
    let eph_pub = x25519_dalek::PublicKey::from(eph);
    let secret = member.x25519_secret();
    let shared = secret.diffie_hellman(&eph_pub);
    if !shared.was_contributory() {
        return Err(CryptoError::AuthFailure);
    }
    let recipient = x25519_dalek::PublicKey::from(&secret);
    let k = wrap_key(shared.as_bytes(), &eph, recipient.as_bytes());
    let msg = open(&k, WRAP_LABEL, rest)?;
    if msg.len() < 32 {
        return Err(CryptoError::AuthFailure);
    }
    let (id, key) = msg.split_at(msg.len() - 32);
    let key_id = Name::from_tlv(id).map_err(|_| CryptoError::AuthFailure)?;
    Ok(GroupKey::new(key_id, key.try_into().expect("32 bytes")))
}

use super::keys::{KeyPair, PublicKey};
use crate::name::{self, Component, Name, NameError};
use crate::packet::{ContentType, DataPacket, Validity};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertError {
    #[error("notAfter precedes notBefore")]
    InvalidValidity,
    #[error("not a certificate: {0}")]
    NotACertificate(String),
    #[error(transparent)]
    Name(#[from] NameError),
}

/// Signs `p` in place of its signature fields.
pub fn sign_data(mut p: DataPacket, signer: &KeyPair, cert_name: &Name) -> DataPacket {
    p.sig_info.key_locator = cert_name.clone();
    p.sig_value = signer.sign(&p.signed_portion());
    p
}

pub fn verify_signature(p: &DataPacket, key: &PublicKey) -> bool {
    key.verify(&p.signed_portion(), &p.sig_value)
}

/// A public key bound to a name: a Data packet of type KEY whose content is
/// the raw key and whose name is `<identity>/KEY/<keyid>/<issuer>/<version>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Certificate {
    packet: DataPacket,
    key: PublicKey,
}

impl Certificate {
    pub fn from_packet(packet: DataPacket) -> Result<Self, CertError> {
        let bad = |why: &str| CertError::NotACertificate(format!("{}: {why}", packet.name));
        if packet.content_type != ContentType::Key {
            return Err(bad("content type is not KEY"));
        }
        let n = packet.name.len();
        if n < 4 || packet.name.get(n - 4).map(Component::as_bytes) != Some(name::KEY.as_bytes()) {
            return Err(bad("KEY component misplaced"));
        }
        let key = PublicKey::from_bytes(&packet.content).ok_or_else(|| bad("bad public key"))?;
        Ok(Self { packet, key })
    }

    pub fn packet(&self) -> &DataPacket {
        &self.packet
    }

    pub fn into_packet(self) -> DataPacket {
        self.packet
    }

    pub fn name(&self) -> &Name {
        &self.packet.name
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.key
    }

    pub fn key_locator(&self) -> &Name {
        self.packet.key_locator()
    }

    pub fn validity(&self) -> Validity {
        self.packet.validity()
    }

    /// Everything before `KEY`.
    pub fn identity(&self) -> Name {
        identity_of(self.name()).expect("checked at construction")
    }

    /// `<identity>/KEY/<keyid>`, shared by every certificate of one key.
    pub fn key_name(&self) -> Name {
        key_name_of(self.name()).expect("checked at construction")
    }

    pub fn issuer(&self) -> &Component {
        &self.name().components()[self.name().len() - 2]
    }

    pub fn version(&self) -> Option<u64> {
        self.name().last()?.typed_number("v")
    }

    pub fn is_self_signed(&self) -> bool {
        self.issuer().as_bytes() == name::SELF_ISSUER.as_bytes() && self.key_locator() == self.name()
    }

    pub fn verify_by(&self, issuer: &PublicKey) -> bool {
        verify_signature(&self.packet, issuer)
    }

    pub fn encode(&self) -> Vec<u8> {
        self.packet.encode()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CertError> {
        let p = DataPacket::decode(bytes).map_err(|e| CertError::NotACertificate(e.to_string()))?;
        Self::from_packet(p)
    }
}

fn key_index(cert_name: &Name) -> Option<usize> {
    let n = cert_name.len();
    (n >= 4 && cert_name.get(n - 4)?.as_bytes() == name::KEY.as_bytes()).then(|| n - 4)
}

/// The identity part of a certificate name.
pub fn identity_of(cert_name: &Name) -> Option<Name> {
    key_index(cert_name).map(|i| cert_name.prefix(i))
}

/// `<identity>/KEY/<keyid>` for a certificate name.
pub fn key_name_of(cert_name: &Name) -> Option<Name> {
    key_index(cert_name).map(|i| cert_name.prefix(i + 2))
}

/// The issuer label a certificate signed by `issuer_cert` carries: the last
/// identity component of the issuer.
pub fn issuer_label(issuer_cert: &Name) -> Option<String> {
    let id = identity_of(issuer_cert)?;
    Some(id.last()?.to_string())
}

fn build(
    name: Name,
    key: &PublicKey,
    validity: Validity,
    signer: &KeyPair,
    locator: &Name,
) -> Result<Certificate, CertError> {
    let p = DataPacket::unsigned(name, ContentType::Key, key.as_bytes().to_vec(), validity);
    Certificate::from_packet(sign_data(p, signer, locator))
}

fn check(validity: Validity) -> Result<Validity, CertError> {
    Validity::new(validity.not_before, validity.not_after).ok_or(CertError::InvalidValidity)
}

/// `<identity>/KEY/<keyid>/self/v=<version>`, signed by its own key.
pub fn self_sign(
    subject: &KeyPair,
    identity: &Name,
    version: u64,
    validity: Validity,
) -> Result<Certificate, CertError> {
    let validity = check(validity)?;
    let pk = subject.public_key();
    let name = name::make_key_cert_name(identity, &pk.keyid(), name::SELF_ISSUER, version)?;
    let locator = name.clone();
    build(name, &pk, validity, subject, &locator)
}

/// A certificate for `subject_key` under `subject_identity`, signed by the
/// issuer's key and naming the issuer's certificate as key locator.
pub fn issue_cert(
    issuer: &KeyPair,
    issuer_cert: &Name,
    subject_key: &PublicKey,
    subject_identity: &Name,
    version: u64,
    validity: Validity,
) -> Result<Certificate, CertError> {
    let validity = check(validity)?;
    let label = issuer_label(issuer_cert)
        .ok_or_else(|| CertError::NotACertificate(issuer_cert.to_string()))?;
    let name = name::make_key_cert_name(subject_identity, &subject_key.keyid(), &label, version)?;
    build(name, subject_key, validity, issuer, issuer_cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::security::keys::generate_keypair;

    fn n(s: &str) -> Name {
        Name::parse(s).unwrap()
    }

    fn forever() -> Validity {
        Validity::new(0, u64::MAX).unwrap()
    }

    #[test]
    fn self_signed_workspace_cert() {
        let alice = generate_keypair(Some([1; 32]));
        let bob = generate_keypair(Some([2; 32]));
        let c = self_sign(&alice, &n("MeetRoom/alice@example.com"), 1, forever()).unwrap();
        let expected = format!("MeetRoom/alice@example.com/KEY/{}/self/v=1", alice.keyid());
        assert_eq!(c.name().to_string(), expected);
        assert!(c.is_self_signed());
        assert!(c.verify_by(&alice.public_key()));
        assert!(!c.verify_by(&bob.public_key()));
        assert_eq!(c.identity(), n("MeetRoom/alice@example.com"));
        assert_eq!(c.version(), Some(1));
        assert_eq!(Certificate::decode(&c.encode()).unwrap(), c);
    }

    #[test]
    fn invalid_window_rejected() {
        let k = generate_keypair(Some([1; 32]));
        let v = Validity {
            not_before: 10,
            not_after: 9,
        };
        assert_eq!(self_sign(&k, &n("a"), 1, v), Err(CertError::InvalidValidity));
    }

    #[test]
    fn bob_issues_for_alice() {
        let alice = generate_keypair(Some([1; 32]));
        let bob = generate_keypair(Some([2; 32]));
        let bob_cert = self_sign(&bob, &n("bob@foobar.org"), 1, forever()).unwrap();
        let c = issue_cert(
            &bob,
            bob_cert.name(),
            &alice.public_key(),
            &n("alice@example.com"),
            1,
            forever(),
        )
        .unwrap();
        assert_eq!(c.issuer().to_string(), "bob@foobar.org");
        assert_eq!(c.key_locator(), bob_cert.name());
        assert!(!c.is_self_signed());
        assert!(c.verify_by(&bob.public_key()));
        assert!(!c.verify_by(&alice.public_key()));
        assert_eq!(c.public_key(), &alice.public_key());
    }

    #[test]
    fn tampering_breaks_signature() {
        let k = generate_keypair(Some([5; 32]));
        let cert = n("x/KEY/1/self/v=1");
        let p = DataPacket::unsigned(n("x/DATA/seq=1"), ContentType::Blob, b"hi".to_vec(), forever());
        let mut s = sign_data(p, &k, &cert);
        assert_eq!(s.key_locator(), &cert);
        assert!(verify_signature(&s, &k.public_key()));
        s.content[0] ^= 1;
        assert!(!verify_signature(&s, &k.public_key()));
    }

    #[test]
    fn rejects_non_certificates() {
        let k = generate_keypair(Some([5; 32]));
        let p = DataPacket::unsigned(n("x/DATA/seq=1"), ContentType::Key, vec![0; 32], forever());
        assert!(Certificate::from_packet(p).is_err());
        let p = DataPacket::unsigned(n("x/KEY/1/self/v=1"), ContentType::Blob, k.public_key().as_bytes().to_vec(), forever());
        assert!(Certificate::from_packet(p).is_err());
    }
}

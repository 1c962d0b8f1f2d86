use super::cert::Certificate;
use crate::name::Name;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone)]
struct Entry {
    cert: Certificate,
    anchor: bool,
    validated: bool,
}

/// Certificates by name, with an index by identity. A certificate is marked
/// validated only after its signature and policy were checked against an
/// issuer chain ending in an anchor.
#[derive(Debug, Clone, Default)]
pub struct CertStore {
    certs: BTreeMap<Name, Entry>,
    by_identity: BTreeMap<Name, BTreeSet<Name>>,
}

impl CertStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an unvalidated certificate. Returns false if the name was known.
    pub fn insert(&mut self, cert: Certificate) -> bool {
        self.insert_entry(cert, false)
    }

    /// Adds a trust anchor, which counts as validated.
    pub fn add_anchor(&mut self, cert: Certificate) {
        let name = cert.name().clone();
        self.insert_entry(cert, true);
        let e = self.certs.get_mut(&name).expect("just inserted");
        e.anchor = true;
        e.validated = true;
    }

    fn insert_entry(&mut self, cert: Certificate, anchor: bool) -> bool {
        let name = cert.name().clone();
        if self.certs.contains_key(&name) {
            return false;
        }
        self.by_identity
            .entry(cert.identity())
            .or_default()
            .insert(name.clone());
        self.certs.insert(
            name,
            Entry {
                cert,
                anchor,
                validated: anchor,
            },
        );
        true
    }

    pub fn get(&self, name: &Name) -> Option<&Certificate> {
        self.certs.get(name).map(|e| &e.cert)
    }

    pub fn contains(&self, name: &Name) -> bool {
        self.certs.contains_key(name)
    }

    pub fn is_anchor(&self, name: &Name) -> bool {
        self.certs.get(name).is_some_and(|e| e.anchor)
    }

    pub fn is_validated(&self, name: &Name) -> bool {
        self.certs.get(name).is_some_and(|e| e.validated)
    }

    pub(crate) fn mark_validated(&mut self, name: &Name) {
        if let Some(e) = self.certs.get_mut(name) {
            e.validated = true;
        }
    }

    /// Certificates whose identity is `identity` (e.g. `<ws>/<user>`).
    pub fn by_identity<'a>(&'a self, identity: &Name) -> impl Iterator<Item = &'a Certificate> + 'a {
        self.by_identity
            .get(identity)
            .into_iter()
            .flatten()
            .filter_map(|n| self.get(n))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Certificate> {
        self.certs.values().map(|e| &e.cert)
    }

    pub fn anchors(&self) -> impl Iterator<Item = &Certificate> {
        self.certs.values().filter(|e| e.anchor).map(|e| &e.cert)
    }

    pub fn len(&self) -> usize {
        self.certs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.certs.is_empty()
    }
}

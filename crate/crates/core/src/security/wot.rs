//! Web-of-trust authentication: breadth-first search over issuer edges.

use super::cert::{key_name_of, Certificate};
use super::store::CertStore;
use crate::name::Name;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

pub const DEFAULT_WOT_DEPTH: usize = 5;

/// Certificates that vouch for `c`: those holding the key named by its key
/// locator, whose public key verifies `c`. A self-signed certificate is
/// vouched for by the other certificates of its own key.
pub fn issuers_of<'a>(c: &Certificate, store: &'a CertStore) -> Vec<&'a Certificate> {
    let Some(key) = key_name_of(c.key_locator()) else {
        return Vec::new();
    };
    let identity = key.prefix(key.len() - 2);
    store
        .by_identity(&identity)
        .filter(|s| s.name() != c.name() && s.key_name() == key && c.verify_by(s.public_key()))
        .collect()
}

/// Shortest chain from `target` to any certificate in `roots`, using at
/// most `max_depth` issuer edges. The chain starts with `target` and ends
/// with the root.
pub fn wot_authenticate(
    target: &Certificate,
    roots: &BTreeSet<Name>,
    store: &CertStore,
    max_depth: usize,
) -> Option<Vec<Name>> {
    if roots.contains(target.name()) {
        return Some(vec![target.name().clone()]);
    }
    let mut parent: BTreeMap<Name, Name> = BTreeMap::new();
    let mut seen: BTreeSet<Name> = BTreeSet::from([target.name().clone()]);
    let mut queue: VecDeque<(Certificate, usize)> = VecDeque::from([(target.clone(), 0)]);
    while let Some((c, depth)) = queue.pop_front() {
        if depth == max_depth {
            continue;
        }
        for s in issuers_of(&c, store) {
            if !seen.insert(s.name().clone()) {
                continue;
            }
            parent.insert(s.name().clone(), c.name().clone());
            if roots.contains(s.name()) {
                let mut chain = vec![s.name().clone()];
                while let Some(p) = parent.get(chain.last().expect("non-empty")) {
                    chain.push(p.clone());
                }
                chain.reverse();
                return Some(chain);
            }
            queue.push_back((s.clone(), depth + 1));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::Validity;
    use crate::security::cert::{issue_cert, self_sign};
    use crate::security::keys::generate_keypair;

    fn n(s: &str) -> Name {
        Name::parse(s).unwrap()
    }

    #[test]
    fn jane_trusts_alice_through_bob() {
        let v = Validity::new(0, u64::MAX).unwrap();
        let alice = generate_keypair(Some([1; 32]));
        let bob = generate_keypair(Some([2; 32]));
        let bob_self = self_sign(&bob, &n("bob@foobar.org"), 1, v).unwrap();
        let alice_by_bob = issue_cert(&bob, bob_self.name(), &alice.public_key(), &n("alice@example.com"), 1, v).unwrap();
        let mut store = CertStore::new();
        store.insert(bob_self.clone());
        store.insert(alice_by_bob.clone());
        let roots = BTreeSet::from([bob_self.name().clone()]);
        let chain = wot_authenticate(&alice_by_bob, &roots, &store, DEFAULT_WOT_DEPTH).unwrap();
        assert_eq!(chain, vec![alice_by_bob.name().clone(), bob_self.name().clone()]);
        assert_eq!(wot_authenticate(&bob_self, &roots, &store, 1).unwrap(), vec![bob_self.name().clone()]);
        assert_eq!(wot_authenticate(&alice_by_bob, &BTreeSet::new(), &store, 5), None);
    }

    #[test]
    fn depth_limit_and_cycles() {
        let v = Validity::new(0, u64::MAX).unwrap();
        let keys: Vec<_> = (0..3).map(|i| generate_keypair(Some([i + 1; 32]))).collect();
        let names = ["a", "b", "c"];
        let selfs: Vec<_> = keys.iter().zip(names).map(|(k, id)| self_sign(k, &n(id), 1, v).unwrap()).collect();
        // c <- b <- a, plus a <- c closing a cycle.
        let b_by_c = issue_cert(&keys[2], selfs[2].name(), &keys[1].public_key(), &n("b"), 2, v).unwrap();
        let a_by_b = issue_cert(&keys[1], b_by_c.name(), &keys[0].public_key(), &n("a"), 2, v).unwrap();
        let c_by_a = issue_cert(&keys[0], a_by_b.name(), &keys[2].public_key(), &n("c"), 2, v).unwrap();
        let mut store = CertStore::new();
        for c in [&b_by_c, &a_by_b, &c_by_a] {
            store.insert((*c).clone());
        }
        let roots = BTreeSet::from([n("nobody/KEY/1/self/v=1")]);
        assert_eq!(wot_authenticate(&a_by_b, &roots, &store, 10), None);
        store.insert(selfs[2].clone());
        let roots = BTreeSet::from([selfs[2].name().clone()]);
        assert_eq!(wot_authenticate(&a_by_b, &roots, &store, 1), None);
        assert_eq!(wot_authenticate(&a_by_b, &roots, &store, 2).unwrap().len(), 3);
    }
}

//! Random certificate graphs and an independent reachability oracle for
//! web-of-trust authentication. Shared with the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, VecDeque};
use wksp_core::security::{issue_cert, self_sign, wot_authenticate, CertStore, Certificate, KeyPair};
use wksp_core::{Name, Validity};

/// Abstract certificate: `issuer` vouches for `subject`'s key.
#[derive(Clone, Copy, Debug)]
struct Edge {
    issuer: usize,
    subject: usize,
}

/// Shortest chain length (in certificates) from certificate `target` to
/// any root, following at most `depth` issuer steps. A certificate is
/// vouched for by every other certificate of its issuer's key.
fn oracle(edges: &[Edge], target: usize, roots: &BTreeSet<usize>, depth: usize) -> Option<usize> {
    let mut dist = vec![usize::MAX; edges.len()];
    dist[target] = 0;
    let mut q = VecDeque::from([target]);
    while let Some(c) = q.pop_front() {
        if roots.contains(&c) {
            return Some(dist[c] + 1);
        }
        if dist[c] == depth {
            continue;
        }
        for (k, e) in edges.iter().enumerate() {
            if k != c && e.subject == edges[c].issuer && dist[k] == usize::MAX {
                dist[k] = dist[c] + 1;
                q.push_back(k);
            }
        }
    }
    None
}

/// Builds one random graph of at most ten users, compares every target
/// against the oracle and returns how many queries were checked.
pub fn check_graph(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = rng.gen_range(2..=10);
    let v = Validity::new(0, u64::MAX).unwrap();
    let keys: Vec<KeyPair> = (0..users).map(|i| KeyPair::from_seed([i as u8 + 1; 32])).collect();
    let ids: Vec<Name> = (0..users).map(|i| Name::parse(&format!("user{i}")).unwrap()).collect();
    let mut edges = Vec::new();
    let mut certs: Vec<Certificate> = Vec::new();
    for i in 0..users {
        // Some users never self-sign, so their key is only known through others.
        if rng.gen_bool(0.8) {
            edges.push(Edge { issuer: i, subject: i });
            certs.push(self_sign(&keys[i], &ids[i], 1, v).unwrap());
        }
    }
    let density = rng.gen_range(0.05..0.4);
    for i in 0..users {
        for j in 0..users {
            if i != j && rng.gen_bool(density) {
                // The key locator names any certificate of the issuer's key;
                // the issuer label keeps certificate names distinct.
                let locator = Name::parse(&format!("user{i}/KEY/{}/self/v=1", keys[i].keyid())).unwrap();
                let c = issue_cert(&keys[i], &locator, &keys[j].public_key(), &ids[j], 1, v).unwrap();
                edges.push(Edge { issuer: i, subject: j });
                certs.push(c);
            }
        }
    }
    let mut store = CertStore::new();
    for c in &certs {
        store.insert(c.clone());
    }
    let mut checked = 0;
    for _ in 0..4 {
        if certs.is_empty() {
            break;
        }
        let roots: BTreeSet<usize> = (0..certs.len()).filter(|_| rng.gen_bool(0.2)).collect();
        let root_names: BTreeSet<Name> = roots.iter().map(|&k| certs[k].name().clone()).collect();
        let depth = rng.gen_range(1..=6);
        for (t, cert) in certs.iter().enumerate() {
            let want = oracle(&edges, t, &roots, depth);
            let got = wot_authenticate(cert, &root_names, &store, depth);
            checked += 1;
            if got.as_ref().map(Vec::len) != want {
                return Err(format!("seed {seed}: target {} expected {want:?} got {got:?}", cert.name()));
            }
            if let Some(chain) = got {
                check_chain(&chain, &store, &root_names)?;
            }
        }
    }
    Ok(checked)
}

/// Each certificate in the chain must verify under the next one.
fn check_chain(chain: &[Name], store: &CertStore, roots: &BTreeSet<Name>) -> Result<(), String> {
    if !roots.contains(chain.last().unwrap()) {
        return Err(format!("chain {chain:?} does not end at a root"));
    }
    for w in chain.windows(2) {
        let (c, s) = (store.get(&w[0]).unwrap(), store.get(&w[1]).unwrap());
        if !c.verify_by(s.public_key()) || s.key_name() != c.key_locator().prefix(c.key_locator().len() - 2) {
            return Err(format!("{} is not vouched for by {}", w[0], w[1]));
        }
    }
    Ok(())
}

/// Bob certifies Alice; Jane trusts Bob's own certificate.
pub fn jane_bob_alice_chain_len() -> Option<usize> {
    let v = Validity::new(0, u64::MAX).unwrap();
    let n = |s: &str| Name::parse(s).unwrap();
    let alice = KeyPair::from_seed([21; 32]);
    let bob = KeyPair::from_seed([22; 32]);
    let bob_self = self_sign(&bob, &n("bob@foobar.org"), 1, v).unwrap();
    let alice_self = self_sign(&alice, &n("alice@example.com"), 1, v).unwrap();
    let alice_by_bob = issue_cert(&bob, bob_self.name(), &alice.public_key(), &n("alice@example.com"), 1, v).unwrap();
    let mut store = CertStore::new();
    for c in [&bob_self, &alice_self, &alice_by_bob] {
        store.insert(c.clone());
    }
    let jane_roots = BTreeSet::from([bob_self.name().clone()]);
    store
        .by_identity(&n("alice@example.com"))
        .filter_map(|c| wot_authenticate(c, &jane_roots, &store, 5))
        .map(|c| c.len())
        .min()
}

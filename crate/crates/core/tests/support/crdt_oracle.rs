//! Convergence oracles for the document CRDT. Shared with the acceptance
//! suite.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wksp_core::crdt::{Delta, Doc};

const FILES: [&str; 2] = ["a.txt", "b.txt"];

/// One random local edit on `doc`, or `None` if the pick was a no-op.
fn random_edit(doc: &mut Doc, rng: &mut impl Rng) -> Option<Delta> {
    let path = FILES[rng.gen_range(0..FILES.len())];
    let r = match rng.gen_range(0..10) {
        0 => doc.create_text(path),
        1 => doc.remove(path),
        2 => doc.create_folder("dir"),
        3..=4 => match doc.text_len(path) {
            Some(n) if n > 0 => {
                let pos = rng.gen_range(0..n);
                doc.local_delete(path, pos, rng.gen_range(1..=(n - pos).min(3)))
            }
            _ => return None,
        },
        _ => match doc.text_len(path) {
            Some(n) => {
                let c = (b'a' + rng.gen_range(0..26)) as char;
                doc.local_insert(path, rng.gen_range(0..=n), &c.to_string().repeat(rng.gen_range(1..3)))
            }
            None => doc.create_text(path),
        },
    };
    r.ok().filter(|d| !d.is_empty())
}

/// Replicas sharing `a.txt = "xy"`.
fn base(replicas: usize) -> (Vec<Doc>, Delta) {
    let mut seed = Doc::new("r0");
    let mut d = seed.create_text("a.txt").unwrap();
    d.extend(seed.local_insert("a.txt", 0, "xy").unwrap());
    let docs = (0..replicas)
        .map(|i| {
            let mut doc = Doc::new(format!("r{i}"));
            doc.apply_remote(&d);
            doc
        })
        .collect();
    (docs, d)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Deltas produced by `ops` edits over `replicas` replicas. Before each edit
/// the editing replica may first see some earlier deltas, which creates
/// causal dependencies between them.
pub fn scenario(replicas: usize, ops: usize, rng: &mut impl Rng) -> (Delta, Vec<Delta>) {
    let (mut docs, init) = base(replicas);
    let mut deltas: Vec<Delta> = Vec::new();
    let mut seen: Vec<Vec<bool>> = vec![Vec::new(); replicas];
    while deltas.len() < ops {
        let r = rng.gen_range(0..replicas);
        for (k, d) in deltas.iter().enumerate() {
            if !seen[r].get(k).copied().unwrap_or(false) && rng.gen_bool(0.5) {
                docs[r].apply_remote(d);
                seen[r].resize(deltas.len(), false);
                seen[r][k] = true;
            }
        }
        if let Some(d) = random_edit(&mut docs[r], rng) {
            deltas.push(d);
            seen[r].resize(deltas.len(), false);
            seen[r][deltas.len() - 1] = true;
        }
    }
    (init, deltas)
}

/// Applies the deltas of random small scenarios in every possible order.
/// Returns the number of orders checked.
pub fn exhaustive(per_size: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cases = 0;
    for replicas in 2..=4 {
        for ops in 1..=6 {
            let perms = permutations(ops);
            for _ in 0..per_size {
                let (init, deltas) = scenario(replicas, ops, &mut rng);
                let mut reference: Option<Doc> = None;
                for p in &perms {
                    let mut d = Doc::new("observer");
                    d.apply_remote(&init);
                    for &i in p {
                        d.apply_remote(&deltas[i]);
                    }
                    if d.parked_ops() != 0 {
                        return Err(format!("order {p:?} left {} ops parked", d.parked_ops()));
                    }
                    match &reference {
                        None => reference = Some(d),
                        Some(r) if *r != d => return Err(format!("order {p:?} diverged: {:?} vs {:?}", r.render(), d.render())),
                        Some(_) => {}
                    }
                    cases += 1;
                }
            }
        }
    }
    Ok(cases)
}

/// Sixteen replicas edit concurrently while gossiping random subsets of
/// what they know, with duplicates and reordering; after a final full
/// exchange every replica holds the same document.
pub fn gossip_run(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut docs, _) = base(16);
    let mut log: Vec<Delta> = Vec::new();
    for _ in 0..200 {
        let r = rng.gen_range(0..16);
        if !log.is_empty() {
            for _ in 0..rng.gen_range(0..4) {
                let d = &log[rng.gen_range(0..log.len())];
                docs[r].apply_remote(d);
            }
        }
        loop {
            if let Some(d) = random_edit(&mut docs[r], &mut rng) {
                log.push(d);
                break;
            }
        }
    }
    for doc in &mut docs {
        let mut order: Vec<&Delta> = log.iter().collect();
        order.shuffle(&mut rng);
        for d in order {
            doc.apply_remote(d);
        }
    }
    for d in &docs {
        if d.parked_ops() != 0 || *d != docs[0] || d.digest() != docs[0].digest() {
            return Err(format!("seed {seed}: {} diverged: {:?} vs {:?}", d.replica(), d.render(), docs[0].render()));
        }
    }
    Ok(())
}

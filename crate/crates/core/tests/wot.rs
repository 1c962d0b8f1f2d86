mod support;

use support::wot_oracle::{check_graph, jane_bob_alice_chain_len};

#[test]
fn matches_reachability_oracle() {
    let mut checked = 0;
    for seed in 0..300 {
        checked += check_graph(seed).unwrap();
    }
    assert!(checked > 1000);
}

#[test]
fn jane_reaches_alice_through_bob() {
    assert_eq!(jane_bob_alice_chain_len(), Some(2));
}

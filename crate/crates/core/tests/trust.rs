mod support;

use support::trust_matrix::cases;

#[test]
fn trust_matrix_is_enforced() {
    let cases = cases();
    let violations = cases.iter().filter(|c| !c.expect_accept).count();
    assert!(violations >= 12, "only {violations} violation cases");
    let wrong: Vec<String> = cases
        .iter()
        .filter(|c| !c.correct())
        .map(|c| format!("{}: expected accept={} got {:?}", c.name, c.expect_accept, c.outcome))
        .collect();
    assert!(wrong.is_empty(), "{}", wrong.join("\n"));
}


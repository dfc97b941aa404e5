mod common;

use common::checks::fixture_checks;

#[test]
fn every_estimator_matches_its_arithmetic_oracle() {
    let checks = fixture_checks();
    assert!(checks.len() > 40);
    let bad: Vec<String> = checks
        .iter()
        .filter(|c| !c.passes(1e-10))
        .map(|c| format!("{}: got {} want {}", c.name, c.got, c.want))
        .collect();
    assert!(bad.is_empty(), "{}", bad.join("\n"));
}

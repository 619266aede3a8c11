//! The acceptance suite, one line per criterion.
//!
//! Criteria 7, 8 and 10 are red on their literal statements, and 11 requires every other
//! criterion to pass. This target asserts that exactly that set fails, so a regression in
//! either direction shows up here.

use pgc_core::harness::selftest::{run_selftest, SelftestOptions};

/// Criteria that fail on their literal statement, with the reason.
const KNOWN_RED: &[(usize, &str)] = &[
    (7, "Cesaro means at n = 1000 deviate by O(1/n) = 1e-3 from the Riesz projection; 1e-6 is out of reach"),
    (8, "y = sum c_j q_j is invertible on the ad_unitary(3) model, so R(y) = 1 and m = 1"),
    (10, "Hausdorff-Young and sum-set bounds need N'∩M = C; they fail on D3 in M3"),
    (11, "the selftest exit status is nonzero while 7, 8 and 10 fail"),
];

fn main() {
    let report = run_selftest(&SelftestOptions::default());
    for c in &report.criteria {
        let known = KNOWN_RED.iter().find(|(id, _)| *id == c.id);
        let status = match (c.passed, known) {
            (true, _) => "PASS".to_string(),
            (false, Some((_, why))) => format!("FAIL (known: {why})"),
            (false, None) => "FAIL".to_string(),
        };
        println!("criterion {:>2}: {} — {}", c.id, status, c.title);
    }
    print!("{}", report.render());
    let expected: Vec<usize> = KNOWN_RED.iter().map(|(id, _)| *id).collect();
    if report.criteria.len() != 11 || report.failing() != expected {
        eprintln!("failing criteria changed: expected {expected:?}, got {:?}", report.failing());
        std::process::exit(1);
    }
    println!("acceptance: failing set matches the known-red set {expected:?}");
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pgc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgc")).args(args).output().expect("pgc runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn generate(family: &str, extra: &[&str], file: &str) -> PathBuf {
    let out = scratch(file);
    let mut args = vec!["generate", family, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = pgc(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn analyze_is_byte_identical_across_runs() {
    let inst = generate("ad_unitary", &["--n", "3", "--seed", "7"], "ad3.json");
    let a = pgc(&["analyze", inst.to_str().unwrap()]);
    let b = pgc(&["analyze", inst.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let cert: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(cert["phase_group"]["order"], 3);
}

#[test]
fn out_file_matches_stdout() {
    let inst = generate("scalars_in_full", &["--n", "2"], "trace2.json");
    let cert = scratch("trace2.cert.json");
    let o = pgc(&["analyze", inst.to_str().unwrap(), "--out", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let again = pgc(&["analyze", inst.to_str().unwrap()]);
    assert_eq!(std::fs::read(&cert).unwrap(), again.stdout);
}

#[test]
fn tolerance_and_seed_overrides_are_echoed() {
    let inst = generate("ad_unitary", &["--n", "2"], "ad2.json");
    let o = pgc(&["analyze", inst.to_str().unwrap(), "--tol-phase", "1e-7", "--seed", "99"]);
    let cert: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cert["tolerances"]["phase"], 1e-7);
    assert_eq!(cert["seed"], 99);
}

#[test]
fn shift_conjugation_skips_unitaries() {
    let inst = generate("shift_conjugation", &["--n", "3"], "sc3.json");
    let o = pgc(&["analyze", inst.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let cert: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cert["phase_group"]["order"], 3);
    assert_eq!(cert["verdicts"]["unitaries"]["status"], "skipped");
    assert_eq!(cert["verdicts"]["unitaries"]["reason"], "fixed algebra not a factor");
}

#[test]
fn schema_error_exits_2() {
    let bad = scratch("bad.json");
    std::fs::write(&bad, r#"{"schema_version": 1, "algebra_n": [1]}"#).unwrap();
    let o = pgc(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema"));
}

#[test]
fn unknown_family_exits_2() {
    assert_eq!(pgc(&["generate", "no_such_family"]).status.code(), Some(2));
}

#[test]
fn non_bimodular_kraus_exits_3_without_certificate() {
    // the flip does not commute with the diagonal subalgebra
    let inst = scratch("flip.json");
    let text = r#"{
  "schema_version": 1,
  "algebra_n": [1, 1],
  "algebra_m": [2],
  "embedding": {"form": "diagonal_in_full"},
  "trace": {"mode": "markov"},
  "channel": {"kind": "kraus", "operators": [[[[[0, 0], [1, 0]], [[1, 0], [0, 0]]]]]},
  "seed": 1
}"#;
    std::fs::write(&inst, text).unwrap();
    let o = pgc(&["analyze", inst.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
}

#[test]
fn qfa_check_runs_the_engine() {
    let inst = generate("ad_unitary", &["--n", "3"], "ad3q.json");
    let o = pgc(&["qfa-check", inst.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["qfa"]["order"], 3);
}

#[test]
fn zero_tolerance_selftest_fails() {
    let o = pgc(&["selftest", "--tol-scale", "0", "--only", "3"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL]"));
}

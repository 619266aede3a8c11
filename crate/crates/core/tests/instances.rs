use pgc_core::harness::instance::{build_inclusion, GeneratorParams};
use pgc_core::harness::{analyze, generate, parse_instance, AnalyzeOptions, HarnessError, FAMILIES};
use pgc_core::spectral::Verdict;
use pgc_core::tower::{JonesTower, TowerOptions};

const MINIMAL_EQUAL: &str = r#"{
  "schema_version": 1,
  "algebra_n": [2],
  "algebra_m": [2],
  "embedding": {"form": "equal"},
  "trace": {"mode": "markov"},
  "channel": {"kind": "kraus", "operators": [[[[[1, 0], [0, 0]], [[0, 0], [1, 0]]]]]},
  "seed": 0
}"#;

fn params(n: usize) -> GeneratorParams {
    GeneratorParams { n: Some(n), ..GeneratorParams::default() }
}

#[test]
fn minimal_equal_inclusion_has_index_one() {
    let spec = parse_instance(MINIMAL_EQUAL).unwrap();
    let tower = JonesTower::build(build_inclusion(&spec).unwrap(), TowerOptions::default()).unwrap();
    assert!((tower.mu - 1.0).abs() < 1e-12);
    let cert = analyze::run_analyze(&spec, &AnalyzeOptions::default()).unwrap();
    assert!(cert.flags.cp && cert.flags.unital);
}

#[test]
fn every_family_round_trips() {
    for f in FAMILIES {
        let p = if f.name == "expectation_mix" {
            GeneratorParams { t: Some(0.25), ..params(3) }
        } else {
            params(3)
        };
        let spec = generate(f.name, &p, 11).unwrap();
        let text = serde_json::to_string_pretty(&spec).unwrap();
        assert_eq!(parse_instance(&text).unwrap(), spec, "{}", f.name);
    }
}

#[test]
fn missing_trace_mode_is_reported_at_trace() {
    let text = MINIMAL_EQUAL.replace(r#"{"mode": "markov"}"#, "{}");
    match parse_instance(&text) {
        Err(HarnessError::Schema(issues)) => assert_eq!(issues[0].path, "trace"),
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn unknown_fields_and_generators_are_rejected() {
    let text = MINIMAL_EQUAL.replace(r#""seed": 0"#, r#""seed": 0, "colour": 1"#);
    assert!(matches!(parse_instance(&text), Err(HarnessError::Schema(_))));
    let text = MINIMAL_EQUAL.replace(
        r#"{"kind": "kraus", "operators": [[[[[1, 0], [0, 0]], [[0, 0], [1, 0]]]]]}"#,
        r#"{"kind": "generator", "name": "nope"}"#,
    );
    assert!(matches!(parse_instance(&text), Err(HarnessError::UnknownGenerator(_))));
}

#[test]
fn bad_generator_parameters() {
    assert!(matches!(generate("ad_unitary", &params(1), 0), Err(HarnessError::BadParams(_))));
    assert!(matches!(generate("expectation_mix", &params(3), 0), Err(HarnessError::BadParams(_))));
    let t = GeneratorParams { t: Some(1.5), ..params(3) };
    assert!(matches!(generate("expectation_mix", &t, 0), Err(HarnessError::BadParams(_))));
}

#[test]
fn ad_unitary_4_has_phase_group_of_order_4() {
    let spec = generate("ad_unitary", &params(4), 0).unwrap();
    assert_eq!(spec.expected.as_ref().unwrap().phase_group_order, Some(4));
    let cert = analyze::run_analyze(&spec, &AnalyzeOptions::default()).unwrap();
    assert_eq!(cert.phase_group.unwrap().order, 4);
}

#[test]
fn ad_unitary_3_passes_every_verdict() {
    let spec = generate("ad_unitary", &params(3), 0).unwrap();
    let cert = analyze::run_analyze(&spec, &AnalyzeOptions::default()).unwrap();
    assert!(cert.passed(), "{}", cert.to_text());
    assert_eq!(cert.phase_group.unwrap().order, 3);
    assert!(!cert.verdicts.values().any(|v| matches!(v, Verdict::Skipped(_))));
}

#[test]
fn expectation_mix_half_is_aperiodic_with_fixed_algebra_n() {
    let p = GeneratorParams { t: Some(0.5), ..params(3) };
    let cert = analyze::run_analyze(&generate("expectation_mix", &p, 0).unwrap(), &AnalyzeOptions::default()).unwrap();
    assert_eq!(cert.phase_group.unwrap().order, 1);
    let fixed = cert.fixed_algebra.unwrap();
    assert_eq!(fixed.dimension, 3);
    assert_eq!(fixed.equals_n, Some(true));
}

#[test]
fn random_cpb_is_cp_and_unital() {
    let cert = analyze::run_analyze(&generate("random_cpb", &params(3), 7).unwrap(), &AnalyzeOptions::default()).unwrap();
    assert!(cert.flags.cp);
    assert!(cert.flags.unital);
}

#[test]
fn shift_conjugation_fixed_algebra_is_abelian() {
    let cert = analyze::run_analyze(&generate("shift_conjugation", &params(3), 0).unwrap(), &AnalyzeOptions::default()).unwrap();
    assert_eq!(cert.phase_group.unwrap().order, 3);
    let fixed = cert.fixed_algebra.unwrap();
    assert_eq!((fixed.dimension, fixed.is_factor), (3, Some(false)));
    assert!(matches!(&cert.verdicts["unitaries"], Verdict::Skipped(r) if r == "fixed algebra not a factor"));
}

#[test]
fn certificates_are_deterministic() {
    let spec = generate("shift_mixture", &params(3), 5).unwrap();
    let a = analyze::run_analyze(&spec, &AnalyzeOptions::default()).unwrap().to_canonical_json();
    let b = analyze::run_analyze(&spec, &AnalyzeOptions::default()).unwrap().to_canonical_json();
    assert_eq!(a, b);
}

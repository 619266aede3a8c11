//! The certification pipeline (tower → channel → spectral → two-box cross-checks) and the
//! byte-stable certificate it emits.

use super::instance::{build_channel, build_inclusion, from_element, InstanceSpec, JsonElement, SCHEMA_VERSION};
use super::HarnessError;
use crate::channel::{BimoduleChannel, BIMODULAR_TOL};
use crate::qfa::{QfaError, TwoBoxSpaces};
use crate::spectral::{self, ProofMode, SpectralError, Tolerances, Verdict};
use crate::tower::{JonesTower, TowerOptions};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tower sanity residuals are held to this bound; the build rejects anything worse.
const TOWER_TOL: f64 = 1e-9;
/// Cross-representation residuals of a channel; construction rejects anything worse.
const CHANNEL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyzeOptions {
    /// Lift the desk-scale guard.
    pub force: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexInfo {
    pub mu: f64,
    pub lambda: f64,
    pub inclusion_matrix: Vec<Vec<usize>>,
    pub two_box_dim: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Flags {
    pub cp: bool,
    pub unital: bool,
    pub trace_preserving: bool,
    pub bimodular: bool,
    pub markov: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CpMargins {
    /// `λ_min(Φ̂)/‖Φ̂‖`.
    pub multiplier: f64,
    /// `λ_min(Choi)/‖Choi‖`.
    pub choi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumInfo {
    pub spectral_radius: f64,
    pub route_distance: f64,
    pub action_eigenvalues: Vec<Complex64>,
    pub y_eigenvalues: Vec<Complex64>,
    pub peripheral: Vec<Complex64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseGroupInfo {
    pub order: usize,
    pub generator_phase: Complex64,
    pub eigenvalues: Vec<Complex64>,
    pub eigenspace_dims: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RelativeIrreducibilityInfo {
    pub flag: bool,
    pub flag_i: bool,
    pub flag_iii: bool,
    pub mode: ProofMode,
    pub consistent: bool,
    pub d: usize,
    pub samples: usize,
    pub witness: Option<JsonElement>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedAlgebraInfo {
    pub dimension: usize,
    pub is_factor: Option<bool>,
    pub center_dimension: Option<usize>,
    pub equals_n: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnitaryInfo {
    pub alpha: Complex64,
    pub u: JsonElement,
}

#[derive(Debug, Clone, Serialize)]
pub struct QfaInfo {
    /// Which element entered the engine: `y` or its rotation `sigma(y)`.
    pub input: String,
    pub order: usize,
    pub eigenvalues: Vec<Complex64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub instance_digest: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub index: IndexInfo,
    pub flags: Flags,
    pub cp_margins: CpMargins,
    pub spectrum: SpectrumInfo,
    pub phase_group: Option<PhaseGroupInfo>,
    pub relative_irreducibility: Option<RelativeIrreducibilityInfo>,
    pub fixed_algebra: Option<FixedAlgebraInfo>,
    pub unitaries: Vec<UnitaryInfo>,
    pub qfa: Option<QfaInfo>,
    pub residuals: BTreeMap<String, f64>,
    pub thresholds: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, Verdict>,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        !self.verdicts.values().any(Verdict::is_fail)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            super::exit::PASS
        } else {
            super::exit::CHECK_FAILED
        }
    }

    pub fn to_canonical_json(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("certificate serializes"))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "pgc {} certificate (instance {})", self.tool_version, &self.instance_digest[..16]);
        let _ = writeln!(s, "index: mu = {:.12}, lambda = {:.12}, two-box dim = {}", self.index.mu, self.index.lambda, self.index.two_box_dim);
        let f = &self.flags;
        let _ = writeln!(
            s,
            "flags: cp = {}, unital = {}, trace-preserving = {}, bimodular = {}, markov = {}",
            f.cp, f.unital, f.trace_preserving, f.bimodular, f.markov
        );
        let _ = writeln!(s, "spectral radius: {:.12} (route distance {:e})", self.spectrum.spectral_radius, self.spectrum.route_distance);
        match &self.phase_group {
            Some(p) => {
                let _ = writeln!(s, "phase group: Z_{} (eigenspace dims {:?})", p.order, p.eigenspace_dims);
            }
            None => {
                let _ = writeln!(s, "phase group: not certified");
            }
        }
        if let Some(r) = &self.relative_irreducibility {
            let _ = writeln!(s, "relatively irreducible: {} ({:?}; (i) = {}, (iii) = {})", r.flag, r.mode, r.flag_i, r.flag_iii);
        }
        if let Some(fa) = &self.fixed_algebra {
            let _ = writeln!(
                s,
                "fixed algebra: dim {}, factor {:?}, centre dim {:?}, equals N {:?}",
                fa.dimension, fa.is_factor, fa.center_dimension, fa.equals_n
            );
        }
        if let Some(q) = &self.qfa {
            let _ = writeln!(s, "two-box engine on {}: m = {}", q.input, q.order);
        }
        let _ = writeln!(s, "verdicts:");
        for (k, v) in &self.verdicts {
            let shown = match v {
                Verdict::Pass => "pass".to_string(),
                Verdict::Fail => "FAIL".to_string(),
                Verdict::Skipped(r) => format!("skipped ({r})"),
            };
            let res = self.residuals.get(k).map(|r| format!("  residual {r:e}")).unwrap_or_default();
            let thr = self.thresholds.get(k).map(|t| format!("  threshold {t:e}")).unwrap_or_default();
            let _ = writeln!(s, "  {k}: {shown}{res}{thr}");
        }
        let _ = writeln!(s, "result: {}", if self.passed() { "pass" } else { "FAIL" });
        s
    }
}

/// Pretty JSON with keys sorted at every level and shortest round-trip floats.
pub fn canonical_json(v: &Value) -> String {
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(m) => {
                let mut keys: Vec<&String> = m.keys().collect();
                keys.sort();
                Value::Object(keys.into_iter().map(|k| (k.clone(), sort(&m[k]))).collect())
            }
            Value::Array(a) => Value::Array(a.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    let mut s = serde_json::to_string_pretty(&sort(v)).expect("value serializes");
    s.push('\n');
    s
}

/// SHA-256 of the canonical form of the (validated) instance.
pub fn instance_digest(spec: &InstanceSpec) -> String {
    let v = serde_json::to_value(spec).expect("instance serializes");
    hex::encode(Sha256::digest(canonical_json(&v).as_bytes()))
}

fn sorted_spectrum(mut v: Vec<Complex64>) -> Vec<Complex64> {
    v.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(a.arg().total_cmp(&b.arg())));
    v
}

/// Two-box engine on the multiplier side of a unital CP channel.
#[derive(Debug, Clone)]
pub struct QfaSection {
    pub info: QfaInfo,
    pub residuals: BTreeMap<String, f64>,
    pub thresholds: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, Verdict>,
}

/// Fixed bounds behind the engine's checks, keyed by check name.
const QFA_THRESHOLDS: &[(&str, f64)] = &[
    ("a_norm", 1e-8),
    ("b_eigen_relations", 1e-7),
    ("c_q1_biprojection", 1e-8),
    ("d_right_shifts", 1e-8),
    ("e_sum_biprojection", 1e-8),
    ("e_sum_vs_riesz_xxstar", 1e-7),
    ("f_group_law", 1e-7),
];

/// Runs the peripheral decomposition on `y_Φ`, falling back to `σ(y_Φ)` (whose transform is
/// `Φ̂/μ`) when `y_Φ` itself is not Fourier-positive.
///
/// The Cesàro mean at `n = 1000` is judged against its exact finite-`n` deviation bound, not
/// a fixed `1e-6`: non-trivial peripheral phases leave an `O(1/n)` remainder.
pub fn qfa_engine(ch: &BimoduleChannel) -> Result<QfaSection, QfaError> {
    let s = ch.spaces();
    let (input, dec) = match s.peripheral_decomposition(&ch.y) {
        Ok(d) => ("y", d),
        Err(QfaError::NotFPositive { .. }) => ("sigma(y)", s.peripheral_decomposition(&s.rotate180(&ch.y))?),
        Err(e) => return Err(e),
    };
    let mut residuals = dec.residuals.clone();
    let rate = residuals.remove("c_cesaro_rate_bound").unwrap_or(0.0);
    let mut thresholds: BTreeMap<String, f64> = QFA_THRESHOLDS.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    thresholds.insert("c_cesaro_n1000".into(), rate);
    thresholds.insert("c_cesaro_within_rate".into(), rate);
    let verdicts = dec
        .checks
        .iter()
        .filter(|(k, _)| k.as_str() != "c_cesaro_n1000")
        .map(|(k, v)| (k.clone(), Verdict::from_bool(*v)))
        .collect();
    Ok(QfaSection {
        info: QfaInfo { input: input.into(), order: dec.m, eigenvalues: dec.eigenvalues.clone() },
        residuals,
        thresholds,
        verdicts,
    })
}

fn skip(reason: &str) -> Verdict {
    Verdict::Skipped(reason.to_string())
}

/// Builds tower, spaces and channel for an instance.
pub fn build(spec: &InstanceSpec, opts: &AnalyzeOptions) -> Result<BimoduleChannel, HarnessError> {
    let incl = build_inclusion(spec)?;
    let tower = JonesTower::build(incl, TowerOptions { force: opts.force, max_dim: None })?;
    let spaces = Arc::new(TwoBoxSpaces::new(tower)?);
    build_channel(spec, &spaces)
}

pub fn run_analyze(spec: &InstanceSpec, opts: &AnalyzeOptions) -> Result<Certificate, HarnessError> {
    let tol = spec.tolerances;
    let ch = build(spec, opts)?;
    let spaces = ch.spaces().clone();
    let tower = &spaces.tower;
    let mut residuals = BTreeMap::new();
    let mut thresholds = BTreeMap::new();
    let mut verdicts = BTreeMap::new();

    let d = &tower.diagnostics;
    for (k, v) in [
        ("tower_markov_deviation", d.markov_deviation),
        ("tower_tau1_e1_deviation", d.tau1_e1_deviation),
        ("tower_e1_compression", d.e1_compression_residual),
        ("tower_jones_relations", d.jones_relation_residual),
    ] {
        residuals.insert(k.to_string(), v);
        thresholds.insert(k.to_string(), TOWER_TOL);
    }
    residuals.insert("fourier_isometry_defect".into(), spaces.isometry_defect);
    thresholds.insert("fourier_isometry_defect".into(), CHANNEL_TOL);
    for (k, v) in &ch.residuals {
        residuals.insert(format!("channel_{k}"), *v);
        thresholds.insert(format!("channel_{k}"), CHANNEL_TOL);
    }
    residuals.insert("bimodularity".into(), ch.bimodularity_residual);
    thresholds.insert("bimodularity".into(), BIMODULAR_TOL);

    let cp = ch.cp.hat_margin >= -tol.cp && ch.cp.choi_margin >= -tol.cp;
    let flags = Flags {
        cp,
        unital: ch.is_unital,
        trace_preserving: ch.is_trace_preserving,
        bimodular: ch.bimodularity_residual <= BIMODULAR_TOL,
        markov: d.markov_deviation <= TOWER_TOL && d.tau1_e1_deviation <= TOWER_TOL,
    };

    let sr = spectral::channel_spectrum(&ch, tol.phase)?;
    let spectrum = SpectrumInfo {
        spectral_radius: sr.r,
        route_distance: sr.route_distance,
        action_eigenvalues: sorted_spectrum(sr.action_eigenvalues.clone()),
        y_eigenvalues: sorted_spectrum(sr.y_eigenvalues.clone()),
        peripheral: sr.peripheral.clone(),
    };

    let mut phase_group = None;
    let mut relative = None;
    let mut fixed_algebra = None;
    let mut unitaries = Vec::new();
    if !ch.is_cp() {
        verdicts.insert("phase_group".into(), skip("channel not completely positive"));
    } else {
        match spectral::certify_phase_group(&ch, spec.seed, &tol) {
            Ok(c) => {
                phase_group = Some(PhaseGroupInfo {
                    order: c.m,
                    generator_phase: c.generator_phase,
                    eigenvalues: (0..c.m).map(|j| crate::algebra_core::root_of_unity(j as i64, c.m)).collect(),
                    eigenspace_dims: c.eigenspaces.iter().map(|e| e.basis.len()).collect(),
                });
                relative = c.relative.as_ref().map(|r| RelativeIrreducibilityInfo {
                    flag: r.flag,
                    flag_i: r.flag_i,
                    flag_iii: r.flag_iii,
                    mode: r.mode,
                    consistent: r.consistent,
                    d: r.d,
                    samples: r.transcripts.len(),
                    witness: r.witness.as_ref().map(from_element),
                });
                fixed_algebra = Some(FixedAlgebraInfo {
                    dimension: c.fixed_dim,
                    is_factor: c.fixed_is_factor,
                    center_dimension: c.fixed_center_dim,
                    equals_n: c.fixed_equals_n,
                });
                let lambdas = (0..c.m).map(|j| crate::algebra_core::root_of_unity(j as i64, c.m));
                for (alpha, u) in lambdas.zip(&c.unitaries) {
                    if let Some(u) = u {
                        unitaries.push(UnitaryInfo { alpha, u: from_element(&u.u) });
                    }
                }
                if let Some(r) = &c.relative {
                    verdicts.insert("relative_irreducibility_consistent".into(), Verdict::from_bool(r.consistent));
                }
                residuals.extend(c.residuals);
                thresholds.extend(c.thresholds);
                verdicts.extend(c.verdicts);
            }
            Err(e @ (SpectralError::RouteDisagreement { .. } | SpectralError::Channel(_))) => return Err(e.into()),
            Err(e) => {
                verdicts.insert("phase_group".into(), Verdict::Skipped(e.to_string()));
            }
        }
    }

    let mut qfa = None;
    if ch.is_cp() && ch.is_unital {
        match qfa_engine(&ch) {
            Ok(sec) => {
                if let Some(p) = &phase_group {
                    verdicts.insert("qfa_order_matches_phase_group".into(), Verdict::from_bool(p.order == sec.info.order));
                }
                for (k, v) in sec.residuals {
                    residuals.insert(format!("qfa_{k}"), v);
                }
                for (k, v) in sec.thresholds {
                    thresholds.insert(format!("qfa_{k}"), v);
                }
                for (k, v) in sec.verdicts {
                    verdicts.insert(format!("qfa_{k}"), v);
                }
                qfa = Some(sec.info);
            }
            Err(e) => {
                verdicts.insert("qfa_cross_check".into(), Verdict::Skipped(e.to_string()));
            }
        }
    } else {
        verdicts.insert("qfa_cross_check".into(), skip("requires a unital completely positive channel"));
    }

    if let Some(ex) = &spec.expected {
        if let Some(m) = ex.phase_group_order {
            let v = phase_group.as_ref().map_or(skip("phase group not certified"), |p| Verdict::from_bool(p.order == m));
            verdicts.insert("expected_phase_group_order".into(), v);
        }
        if let Some(dim) = ex.fixed_algebra_dim {
            let v = fixed_algebra.as_ref().map_or(skip("fixed algebra not computed"), |f| Verdict::from_bool(f.dimension == dim));
            verdicts.insert("expected_fixed_algebra_dim".into(), v);
        }
        if let Some(eq) = ex.fixed_equals_n {
            let v = fixed_algebra.as_ref().map_or(skip("fixed algebra not computed"), |f| Verdict::from_bool(f.equals_n == Some(eq)));
            verdicts.insert("expected_fixed_equals_n".into(), v);
        }
        if let Some(c) = ex.is_cp {
            verdicts.insert("expected_cp".into(), Verdict::from_bool(flags.cp == c));
        }
        if let Some(u) = ex.is_unital {
            verdicts.insert("expected_unital".into(), Verdict::from_bool(flags.unital == u));
        }
    }

    Ok(Certificate {
        schema_version: SCHEMA_VERSION,
        tool: "pgc".into(),
        tool_version: TOOL_VERSION.into(),
        instance_digest: instance_digest(spec),
        seed: spec.seed,
        tolerances: tol,
        index: IndexInfo {
            mu: tower.mu,
            lambda: tower.lambda,
            inclusion_matrix: tower.base.lambda.clone(),
            two_box_dim: spaces.dim(),
        },
        flags,
        cp_margins: CpMargins { multiplier: ch.cp.hat_margin, choi: ch.cp.choi_margin },
        spectrum,
        phase_group,
        relative_irreducibility: relative,
        fixed_algebra,
        unitaries,
        qfa,
        residuals,
        thresholds,
        verdicts,
    })
}

/// Report of `pgc qfa-check`: the two-box engine alone.
#[derive(Debug, Clone, Serialize)]
pub struct QfaReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub instance_digest: String,
    pub qfa: Option<QfaInfo>,
    pub residuals: BTreeMap<String, f64>,
    pub thresholds: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, Verdict>,
}

impl QfaReport {
    pub fn passed(&self) -> bool {
        !self.verdicts.values().any(Verdict::is_fail)
    }

    pub fn to_canonical_json(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("report serializes"))
    }
}

pub fn run_qfa_check(spec: &InstanceSpec, opts: &AnalyzeOptions) -> Result<QfaReport, HarnessError> {
    let ch = build(spec, opts)?;
    let mut report = QfaReport {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.into(),
        instance_digest: instance_digest(spec),
        qfa: None,
        residuals: BTreeMap::new(),
        thresholds: BTreeMap::new(),
        verdicts: BTreeMap::new(),
    };
    match qfa_engine(&ch) {
        Ok(sec) => {
            report.qfa = Some(sec.info);
            report.residuals = sec.residuals;
            report.thresholds = sec.thresholds;
            report.verdicts = sec.verdicts;
        }
        Err(e) => {
            report.verdicts.insert("peripheral_decomposition".into(), Verdict::Skipped(e.to_string()));
        }
    }
    Ok(report)
}

//! Spectral theory of bimodule channels: spectrum equality, Perron–Frobenius data, the
//! Cesàro fixed-point structure, peripheral eigenspaces with their unitaries, relative
//! irreducibility and the phase-group certificate.

use crate::algebra_core::{self, Element};
use crate::channel::{BimoduleChannel, ChannelError};
use crate::linalg::{self, cr, CMat};
use crate::qfa::{self, QfaError, Side, TwoBoxElement};
use crate::rng;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("eigenvalues of y and of the action disagree (Hausdorff distance {distance:e})")]
    RouteDisagreement { distance: f64 },
    #[error("no positive eigenvector at the spectral radius (residual {residual:e})")]
    NoPositiveEigenvector { residual: f64 },
    #[error("no Fourier-positive element in the Riesz subspace at r (min eigenvalue {min_eig:e})")]
    FPositiveSearchFailed { min_eig: f64 },
    #[error("‖Φ(1)‖ = {norm} exceeds 1")]
    NotContractive { norm: f64 },
    #[error("spectral radius {r} is not 1")]
    RadiusNotOne { r: f64 },
    #[error("no faithful invariant state")]
    NoInvariantState,
    #[error("fixed-point algebra is not a factor")]
    FixedAlgebraNotFactor,
    #[error("no unitary found in the eigenspace after {attempts} draws")]
    PatchingFailed { attempts: usize },
    #[error("domination hypothesis not met")]
    PreconditionNotMet,
    #[error("neither hypothesis regime holds")]
    HypothesisUnmet,
    #[error(transparent)]
    Qfa(#[from] QfaError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Peripheral cluster radius.
pub const CLUSTER: f64 = 1e-7;

/// Default numerical rank threshold for eigenspaces and spans.
pub const RANK_TOL: f64 = 1e-9;

/// User-facing tolerances. Verdict thresholds derive from them: unitarity is held to a tenth
/// of `residual`, and the m-fold product span to ten times `residual`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub rank: f64,
    pub phase: f64,
    pub cp: f64,
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rank: RANK_TOL, phase: 1e-8, cp: 1e-9, residual: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped(String),
}

impl Verdict {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail)
    }
}

#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub y_eigenvalues: Vec<Complex64>,
    pub action_eigenvalues: Vec<Complex64>,
    pub r: f64,
    /// One representative per peripheral cluster, sorted by argument in `[0, 2π)`.
    pub peripheral: Vec<Complex64>,
    pub route_distance: f64,
}

fn arg01(z: &Complex64) -> f64 {
    let a = z.arg();
    if a < -1e-12 {
        a + 2.0 * std::f64::consts::PI
    } else {
        a.max(0.0)
    }
}

pub fn channel_spectrum(ch: &BimoduleChannel, tol_phase: f64) -> Result<SpectralReport, SpectralError> {
    let y_eigenvalues = ch.y.value.eigenvalues();
    let action_eigenvalues = linalg::eigenvalues(&ch.action);
    let route_distance = linalg::hausdorff(&y_eigenvalues, &action_eigenvalues);
    if route_distance > 1e-8 {
        return Err(SpectralError::RouteDisagreement { distance: route_distance });
    }
    let r = action_eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let per: Vec<Complex64> =
        action_eigenvalues.iter().cloned().filter(|z| z.norm() >= r * (1.0 - tol_phase) - 1e-12 && r > 0.0).collect();
    let mut peripheral: Vec<Complex64> = linalg::cluster(&per, CLUSTER).iter().map(|g| per[g[0]]).collect();
    peripheral.sort_by(|a, b| arg01(a).partial_cmp(&arg01(b)).unwrap());
    Ok(SpectralReport { y_eigenvalues, action_eigenvalues, r, peripheral, route_distance })
}

#[derive(Debug, Clone)]
pub struct PfChannel {
    pub r: f64,
    pub x: TwoBoxElement,
    pub psi: BimoduleChannel,
    pub residuals: BTreeMap<String, f64>,
}

/// `Ψ = Θ_x` with `x` the leading Laurent coefficient of `(λ − y_Φ)^{-1}` at `λ = r`,
/// which is Fourier-positive because it is a limit of positive multiples of resolvents.
pub fn commuting_pf_channel(ch: &BimoduleChannel) -> Result<PfChannel, SpectralError> {
    if !ch.is_cp() {
        return Err(ChannelError::NotCP.into());
    }
    let sp = ch.spaces();
    let y = &ch.y;
    let r = ch.y.value.eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let rad = 1e-6 * r.max(1.0);
    let p = sp.riesz(y, move |z| (z - cr(r)).norm() < rad);
    let p = sp.project(Side::Plus, &p.value);
    let shifted = y.sub(&sp.one(Side::Plus).scale_re(r))?.mul(&p)?;
    let scale = y.norm_inf().max(1.0);
    let mut lead = p.clone();
    let mut power = shifted.clone();
    for _ in 0..sp.dim() {
        if power.norm_inf() < 1e-8 * scale {
            break;
        }
        lead = power.clone();
        power = power.mul(&shifted)?;
    }
    let x = lead.scale_re(1.0 / lead.norm_inf().max(1e-300));
    let fmin = sp.f_min_eig(&x) / sp.transform(&x).norm_inf().max(1e-300);
    if fmin < -1e-8 {
        return Err(SpectralError::FPositiveSearchFailed { min_eig: fmin });
    }
    let mut residuals = BTreeMap::new();
    let yx = y.mul(&x)?.sub(&x.scale_re(r))?;
    let xy = x.mul(y)?.sub(&x.scale_re(r))?;
    residuals.insert("y_x_minus_r_x".to_string(), yx.norm_inf());
    residuals.insert("x_y_minus_r_x".to_string(), xy.norm_inf());
    let psi = BimoduleChannel::from_y(sp, &x)?;
    let pf = psi.compose(ch)?.action - &psi.action * cr(r);
    let fp = ch.compose(&psi)?.action - &psi.action * cr(r);
    residuals.insert("psi_phi_minus_r_psi".to_string(), linalg::op_norm(&pf));
    residuals.insert("phi_psi_minus_r_psi".to_string(), linalg::op_norm(&fp));
    Ok(PfChannel { r, x, psi, residuals })
}

/// `(r, v ⪰ 0)` with `Φ(v) = r v`, read off as `Ψ(1)`.
pub fn perron_vector(ch: &BimoduleChannel) -> Result<(f64, Element), SpectralError> {
    let pf = commuting_pf_channel(ch)?;
    let m = ch.spaces().tower.m();
    let v = pf.psi.apply(&m.one()).hermitian_part();
    let n = v.norm_inf();
    if n == 0.0 {
        return Err(SpectralError::NoPositiveEigenvector { residual: f64::INFINITY });
    }
    let v = v.scale_re(1.0 / n);
    let res = m.norm2(&(&ch.apply(&v) - &v.scale_re(pf.r)));
    if res > 1e-8 || v.min_eig() < -1e-9 {
        return Err(SpectralError::NoPositiveEigenvector { residual: res });
    }
    Ok((pf.r, v))
}

/// Riesz projection of the action at `α`.
pub fn action_riesz(ch: &BimoduleChannel, alpha: Complex64) -> CMat {
    linalg::riesz_projection(&ch.action, move |z| (z - alpha).norm() < CLUSTER)
}

#[derive(Debug, Clone)]
pub struct FixedStructure {
    pub e_fix: CMat,
    pub zeta: Element,
    pub p_max: Element,
    pub fixed_basis: Vec<Element>,
    pub center_dim: Option<usize>,
    pub is_factor: Option<bool>,
    pub residuals: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, bool>,
}

fn truncated_cesaro(a: &CMat, n: usize) -> CMat {
    let d = a.nrows();
    let mut acc = linalg::zeros(d, d);
    let mut p = linalg::eye(d);
    for _ in 0..n {
        p = &p * a;
        acc += &p;
    }
    acc / cr(n as f64)
}

pub fn cesaro_fixed(ch: &BimoduleChannel, seed: u64) -> Result<FixedStructure, SpectralError> {
    let t = &ch.spaces().tower;
    let m = t.m();
    let gns = t.gns_m();
    let norm1 = ch.apply(&m.one()).norm_inf();
    if norm1 > 1.0 + 1e-9 {
        return Err(SpectralError::NotContractive { norm: norm1 });
    }
    let r = linalg::spectral_radius(&ch.action);
    if (r - 1.0).abs() >= 1e-8 {
        return Err(SpectralError::RadiusNotOne { r });
    }
    let e_fix = action_riesz(ch, cr(1.0));
    let mut residuals = BTreeMap::new();
    let mut checks = BTreeMap::new();
    let ces = truncated_cesaro(&ch.action, 1000);
    let ces_res = linalg::op_norm(&(&ces - &e_fix));
    residuals.insert("cesaro_n1000_vs_riesz".to_string(), ces_res);
    checks.insert("cesaro_n1000_vs_riesz".to_string(), ces_res < 1e-6);
    let zeta = gns.unvec(&(&e_fix * gns.vec(&m.one()))).hermitian_part();
    let fix_res = m.norm2(&(&ch.apply(&zeta) - &zeta));
    residuals.insert("phi_zeta_minus_zeta".to_string(), fix_res);
    checks.insert("phi_zeta_minus_zeta".to_string(), fix_res < 1e-8);
    let nm_res = t.nm.membership_residual(&zeta, m);
    residuals.insert("zeta_in_relative_commutant".to_string(), nm_res);
    checks.insert("zeta_in_relative_commutant".to_string(), nm_res < 1e-8);
    let p_max = algebra_core::range_projection(&zeta, 1e-9);
    let comp = &m.one() - &p_max;
    let mut rng = rng::stream(seed, 11);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a = rng::random_positive(&mut rng, m);
        let x = gns.unvec(&(&e_fix * gns.vec(&a))).hermitian_part();
        let n = x.norm_inf().max(1e-300);
        worst = worst.max((&comp * &x).norm_inf() / n);
    }
    residuals.insert("fixed_ranges_below_p_max".to_string(), worst);
    checks.insert("fixed_ranges_below_p_max".to_string(), worst < 1e-8);
    let fixed_basis = eigen_basis(ch, cr(1.0));
    let (center_dim, is_factor) = if ch.is_unital && invariant_state(ch).is_some() {
        match algebra_core::center_and_factor(&fixed_basis.iter().map(|x| gns.left(x)).collect::<Vec<_>>()) {
            Ok((center, f)) => {
                checks.insert("fixed_space_is_algebra".to_string(), true);
                (Some(center.len()), Some(f))
            }
            Err(_) => {
                checks.insert("fixed_space_is_algebra".to_string(), false);
                (None, None)
            }
        }
    } else {
        (None, None)
    };
    Ok(FixedStructure { e_fix, zeta, p_max, fixed_basis, center_dim, is_factor, residuals, checks })
}

/// Orthonormal (GNS) basis of `ker(Φ − α)`.
pub fn eigen_basis(ch: &BimoduleChannel, alpha: Complex64) -> Vec<Element> {
    eigen_basis_tol(ch, alpha, RANK_TOL)
}

pub fn eigen_basis_tol(ch: &BimoduleChannel, alpha: Complex64, rank_tol: f64) -> Vec<Element> {
    let gns = ch.spaces().tower.gns_m();
    let d = ch.action.nrows();
    let shifted = &ch.action - linalg::eye(d) * alpha;
    let ns = linalg::nullspace(&shifted, rank_tol);
    (0..ns.ncols()).map(|j| gns.unvec(&ns.column(j).into_owned())).collect()
}

fn span_of(ch: &BimoduleChannel, xs: &[Element]) -> CMat {
    span_of_tol(ch, xs, RANK_TOL)
}

fn span_of_tol(ch: &BimoduleChannel, xs: &[Element], rank_tol: f64) -> CMat {
    let gns = ch.spaces().tower.gns_m();
    let d = gns.dim();
    let mut m = linalg::zeros(d, xs.len());
    for (j, x) in xs.iter().enumerate() {
        m.set_column(j, &gns.vec(x));
    }
    linalg::orthonormalize(&m, rank_tol)
}

/// A faithful `Φ`-invariant density (w.r.t. `τ`), taken as the Riesz projection of `Φ^*`
/// at 1 applied to `1`, normalized to `τ(ρ) = 1`.
pub fn invariant_state(ch: &BimoduleChannel) -> Option<Element> {
    let t = &ch.spaces().tower;
    let gns = t.gns_m();
    let m = t.m();
    let adj = ch.action.adjoint();
    let p = linalg::riesz_projection(&adj, |z| (z - cr(1.0)).norm() < CLUSTER);
    let rho = gns.unvec(&(&p * gns.vec(&m.one()))).hermitian_part();
    let tr = m.trace(&rho).re;
    if tr <= 0.0 {
        return None;
    }
    let rho = rho.scale_re(1.0 / tr);
    let inv = m.norm2(&(&ch.adjoint_apply(&rho) - &rho));
    if rho.min_eig() > 1e-9 * rho.norm_inf() && inv < 1e-8 {
        Some(rho)
    } else {
        None
    }
}

#[derive(Debug, Clone)]
pub struct Eigenspace {
    pub alpha: Complex64,
    pub basis: Vec<Element>,
    pub residuals: BTreeMap<String, f64>,
    pub skipped: Option<String>,
}

/// Basis of `M(Φ, α)` with the characterization checks when an invariant faithful state is
/// available.
pub fn eigenspace(ch: &BimoduleChannel, alpha: Complex64, state: Option<&Element>) -> Eigenspace {
    eigenspace_tol(ch, alpha, state, RANK_TOL)
}

pub fn eigenspace_tol(ch: &BimoduleChannel, alpha: Complex64, state: Option<&Element>, rank_tol: f64) -> Eigenspace {
    let basis = eigen_basis_tol(ch, alpha, rank_tol);
    let mut residuals = BTreeMap::new();
    let skipped = if state.is_none() { Some("no faithful invariant state".to_string()) } else { None };
    let t = &ch.spaces().tower;
    let m = t.m();
    let mut eig: f64 = 0.0;
    for x in &basis {
        eig = eig.max(m.norm2(&(&ch.apply(x) - &x.scale(alpha))));
    }
    residuals.insert("eigen".to_string(), eig);
    if skipped.is_none() {
        let ys = ch.y.value.adjoint();
        let hn = ch.hat.norm_inf();
        let h = ch.hat.value.hermitian_part().herm_func(|v| if v > 1e-12 * hn { v.sqrt() } else { 0.0 });
        let e12 = &t.m1_to_m2(t.e1()) * t.e2();
        let he = &h * &e12;
        let (mut prel, mut comm, mut adj, mut ks): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
        for x in &basis {
            let x1 = t.m_to_m1(x);
            prel = prel.max((&(&x1 * &ys) - &(&ys * &x1).scale(alpha)).norm_inf());
            let x2 = t.m1_to_m2(&x1);
            comm = comm.max((&(&x2 * &he) - &(&he * &x2).scale(alpha)).norm_inf());
            let xs = x.adjoint();
            adj = adj.max(m.norm2(&(&ch.apply(&xs) - &xs.scale(alpha.conj()))));
            let xx = &xs * x;
            ks = ks.max(m.norm2(&(&ch.apply(&xx) - &xx)));
        }
        residuals.insert("p_relation".to_string(), prel);
        residuals.insert("intertwining".to_string(), comm);
        residuals.insert("adjoint_rule".to_string(), adj);
        residuals.insert("kadison_schwarz".to_string(), ks);
    }
    Eigenspace { alpha, basis, residuals, skipped }
}

#[derive(Debug, Clone)]
pub struct UnitaryGenerator {
    pub u: Element,
    pub unitarity: f64,
    pub eigen: f64,
    pub subspace_gap: f64,
    pub attempts: usize,
}

/// A unitary `u_α ∈ M(Φ, α)` with `u_α M(Φ,1) = M(Φ,α)`, drawn as the polar part of
/// seeded random elements of the eigenspace.
pub fn unitary_generator(
    ch: &BimoduleChannel,
    alpha: Complex64,
    eig: &[Element],
    fixed: &[Element],
    seed: u64,
) -> Result<UnitaryGenerator, SpectralError> {
    let m = ch.spaces().tower.m();
    let target = span_of(ch, eig);
    let check = |u: &Element| -> (f64, f64, f64) {
        let unitarity = (&(&u.adjoint() * u) - &m.one()).norm_inf().max((&(u * &u.adjoint()) - &m.one()).norm_inf());
        let eigen = m.norm2(&(&ch.apply(u) - &u.scale(alpha)));
        let moved: Vec<Element> = fixed.iter().map(|f| u * f).collect();
        let gap = if moved.is_empty() && eig.is_empty() {
            0.0
        } else {
            let s = span_of(ch, &moved);
            if s.ncols() != target.ncols() {
                1.0
            } else {
                linalg::subspace_gap(&s, &target)
            }
        };
        (unitarity, eigen, gap)
    };
    if (alpha - cr(1.0)).norm() < CLUSTER {
        let u = m.one();
        let (unitarity, eigen, subspace_gap) = check(&u);
        return Ok(UnitaryGenerator { u, unitarity, eigen, subspace_gap, attempts: 0 });
    }
    if eig.is_empty() {
        return Err(SpectralError::PatchingFailed { attempts: 0 });
    }
    let mut r = rng::stream(seed, 23);
    for attempt in 1..=32 {
        let coeffs = rng::gaussian_matrix(&mut r, eig.len(), 1);
        let mut x = m.zero();
        for (b, c) in eig.iter().zip(coeffs.iter()) {
            x.axpy(*c, b);
        }
        let (v, _) = algebra_core::polar(&x);
        let (unitarity, eigen, gap) = check(&v);
        if unitarity < 1e-9 {
            return Ok(UnitaryGenerator { u: v, unitarity, eigen, subspace_gap: gap, attempts: attempt });
        }
    }
    Err(SpectralError::PatchingFailed { attempts: 32 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProofMode {
    Proof,
    Evidence,
    Disproof,
}

#[derive(Debug, Clone, Serialize)]
pub struct Transcript {
    pub label: String,
    pub residual: f64,
    pub in_n: bool,
}

#[derive(Debug, Clone)]
pub struct RelativeIrreducibility {
    pub flag: bool,
    pub flag_i: bool,
    pub flag_iii: bool,
    pub mode: ProofMode,
    /// `τ`-trace of the biprojection generated by `Φ̂` relative to `1₋`.
    pub b_defect: f64,
    pub d: usize,
    pub witness: Option<Element>,
    pub transcripts: Vec<Transcript>,
    /// `(i) ⇒ (iii)` respected.
    pub consistent: bool,
}

/// `R(Σ_{k<d} Φ^k(p))`, equal to `R((Φ + id)^{d−1}(p))`, iterated on range projections.
fn orbit_range(ch: &BimoduleChannel, p: &Element, d: usize) -> Element {
    let mut r = algebra_core::range_projection(p, 1e-9);
    for _ in 1..d.max(1) {
        let img = ch.apply(&r).hermitian_part();
        let n = img.norm_inf();
        let next = if n > 0.0 {
            algebra_core::range_projection(&(&r + &img.scale_re(1.0 / n)), 1e-9)
        } else {
            r.clone()
        };
        if next.dist(&r) < 1e-9 {
            return next;
        }
        r = next;
    }
    r
}

pub fn relative_irreducibility(ch: &BimoduleChannel, seed: u64) -> Result<RelativeIrreducibility, SpectralError> {
    if !ch.is_cp() {
        return Err(ChannelError::NotCP.into());
    }
    let sp = ch.spaces();
    let t = &sp.tower;
    let m = t.m();
    let (b, _) = sp.biprojection_generated(&ch.hat)?;
    let b_defect = b.value.dist(&sp.one(Side::Minus).value);
    let flag_i = b_defect < 1e-7;
    let d = t.minus.dim();
    let in_n = |x: &Element| -> f64 {
        let back = t.n_to_m(&t.base.expect(x));
        back.dist(x)
    };
    let mut transcripts = Vec::new();
    let mut witness = None;
    let mut test = |label: String, p: Element, transcripts: &mut Vec<Transcript>| {
        let r = orbit_range(ch, &p, d);
        let res = in_n(&r);
        let ok = res < 1e-7;
        if !ok && witness.is_none() {
            witness = Some(p);
        }
        transcripts.push(Transcript { label, residual: res, in_n: ok });
    };
    let nm = &t.nm;
    for (i, blk) in nm.algebra.blocks().iter().enumerate() {
        for k in 0..blk.size {
            let p = nm.to_big(&nm.algebra.unit(i, k, k), m);
            test(format!("relative_commutant_unit[{i}][{k}]"), p, &mut transcripts);
        }
    }
    // spectral projections of a generic fixed point: the natural witnesses when M(Φ,1) ≠ N
    let fixed = eigen_basis(ch, cr(1.0));
    if !fixed.is_empty() {
        let mut r = rng::stream(seed, 37);
        let coeffs = rng::gaussian_matrix(&mut r, fixed.len(), 1);
        let mut h = m.zero();
        for (b, c) in fixed.iter().zip(coeffs.iter()) {
            h.axpy(*c, b);
        }
        let h = h.hermitian_part();
        for (i, blk) in h.blocks.iter().enumerate() {
            let (vals, vecs) = linalg::herm_eig(blk);
            let groups = linalg::cluster(&vals.iter().map(|&v| cr(v)).collect::<Vec<_>>(), 1e-8 * h.norm_inf().max(1.0));
            for (g, idx) in groups.iter().enumerate() {
                let mut p = m.zero();
                for &k in idx {
                    let v = vecs.column(k);
                    p.blocks[i] += &v * v.adjoint();
                }
                test(format!("fixed_point_spectral[{i}][{g}]"), p, &mut transcripts);
            }
        }
    }
    let mut r = rng::stream(seed, 31);
    for s in 0..50 {
        let p = rng::random_projection(&mut r, m);
        if p.frob() == 0.0 {
            continue;
        }
        test(format!("random[{s}]"), p, &mut transcripts);
    }
    let flag_iii = transcripts.iter().all(|t| t.in_n);
    let mode = if flag_i {
        ProofMode::Proof
    } else if !flag_iii {
        ProofMode::Disproof
    } else {
        ProofMode::Evidence
    };
    Ok(RelativeIrreducibility {
        flag: flag_i || flag_iii,
        flag_i,
        flag_iii,
        mode,
        b_defect,
        d,
        witness,
        transcripts,
        consistent: !flag_i || flag_iii,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    TracePreserving,
    RelativeIrreducibleFactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollatzWielandt {
    pub dominated_above: bool,
    pub dominated_below: bool,
    pub residual: f64,
    pub equal: bool,
}

/// One-sided domination `Φ(x) ⪯ x` or `Φ(x) ⪰ x` forces `Φ(x) = x`.
pub fn collatz_wielandt_check(
    ch: &BimoduleChannel,
    x: &Element,
    regime: Regime,
    seed: u64,
) -> Result<CollatzWielandt, SpectralError> {
    let holds = match regime {
        Regime::TracePreserving => ch.is_trace_preserving,
        Regime::RelativeIrreducibleFactor => {
            ch.spaces().tower.n().is_factor() && ch.is_cp() && relative_irreducibility(ch, seed)?.flag
        }
    };
    if !holds {
        return Err(SpectralError::HypothesisUnmet);
    }
    let r = linalg::spectral_radius(&ch.action);
    if (r - 1.0).abs() >= 1e-8 {
        return Err(SpectralError::RadiusNotOne { r });
    }
    let m = ch.spaces().tower.m();
    let fx = ch.apply(x);
    let diff = (&fx - x).hermitian_part();
    let dominated_above = diff.scale_re(-1.0).min_eig() >= -1e-9;
    let dominated_below = diff.min_eig() >= -1e-9;
    if !dominated_above && !dominated_below {
        return Err(SpectralError::PreconditionNotMet);
    }
    let residual = m.norm2(&(&fx - x));
    Ok(CollatzWielandt { dominated_above, dominated_below, residual, equal: residual < 1e-7 * m.norm2(x).max(1e-300) })
}

#[derive(Debug, Clone)]
pub struct PhaseGroupCertificate {
    pub spectrum: SpectralReport,
    pub m: usize,
    pub generator_phase: Complex64,
    pub peripheral: Vec<Complex64>,
    pub eigenspaces: Vec<Eigenspace>,
    pub unitaries: Vec<Option<UnitaryGenerator>>,
    pub fixed_dim: usize,
    pub fixed_is_factor: Option<bool>,
    pub fixed_center_dim: Option<usize>,
    pub fixed_equals_n: Option<bool>,
    pub relative: Option<RelativeIrreducibility>,
    pub residuals: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, Verdict>,
    /// Threshold behind each verdict that compares a residual.
    pub thresholds: BTreeMap<String, f64>,
}

impl PhaseGroupCertificate {
    pub fn all_passed(&self) -> bool {
        !self.verdicts.values().any(|v| v.is_fail())
    }
}

fn max_res(es: &[Eigenspace], key: &str) -> f64 {
    es.iter().filter_map(|e| e.residuals.get(key)).cloned().fold(0.0, f64::max)
}

pub fn certify_phase_group(ch: &BimoduleChannel, seed: u64, tol: &Tolerances) -> Result<PhaseGroupCertificate, SpectralError> {
    let t = &ch.spaces().tower;
    let m_alg = t.m();
    let gns = t.gns_m();
    let spectrum = channel_spectrum(ch, tol.phase)?;
    let mut residuals = BTreeMap::new();
    let mut verdicts = BTreeMap::new();
    let mut thresholds: BTreeMap<String, f64> = BTreeMap::new();
    let (res_tol, unit_tol, span_tol) = (tol.residual, tol.residual * 0.1, tol.residual * 10.0);
    let mut judge = |name: &str, value: f64, limit: f64, extra: bool| -> Verdict {
        thresholds.insert(name.to_string(), limit);
        Verdict::from_bool(extra && value < limit)
    };
    residuals.insert("spectrum_route_distance".to_string(), spectrum.route_distance);
    verdicts.insert("spectrum_equality".to_string(), Verdict::Pass);
    let state = invariant_state(ch);
    if state.is_none() {
        return Err(SpectralError::NoInvariantState);
    }
    let peripheral = spectrum.peripheral.clone();
    let m = qfa::fit_roots_of_unity(&peripheral, t.plus.dim())?;
    let lambdas: Vec<Complex64> = (0..m).map(|j| algebra_core::root_of_unity(j as i64, m)).collect();
    let mut closure: f64 = 0.0;
    for a in &peripheral {
        for b in &peripheral {
            let p = a * b;
            closure = closure.max(peripheral.iter().map(|z| (z - p).norm()).fold(f64::INFINITY, f64::min));
        }
        closure = closure.max(peripheral.iter().map(|z| (z - a.conj()).norm()).fold(f64::INFINITY, f64::min));
    }
    residuals.insert("gamma_closure".to_string(), closure);
    verdicts.insert("gamma_closed".to_string(), judge("gamma_closed", closure, tol.phase.max(CLUSTER), true));
    let eigenspaces: Vec<Eigenspace> =
        lambdas.iter().map(|&l| eigenspace_tol(ch, l, state.as_ref(), tol.rank)).collect();
    for key in ["eigen", "p_relation", "intertwining", "adjoint_rule", "kadison_schwarz"] {
        let v = max_res(&eigenspaces, key);
        let name = format!("eigenspace_{key}");
        residuals.insert(name.clone(), v);
        verdicts.insert(name.clone(), judge(&name, v, res_tol, true));
    }
    // semisimplicity: Riesz rank equals geometric multiplicity
    let mut jordan: f64 = 0.0;
    let mut rank_ok = true;
    for (l, es) in lambdas.iter().zip(&eigenspaces) {
        let p = action_riesz(ch, *l);
        let rank = p.trace().re.round() as usize;
        rank_ok &= rank == es.basis.len();
        let d = ch.action.nrows();
        jordan = jordan.max(linalg::op_norm(&((&ch.action - linalg::eye(d) * *l) * &p)));
    }
    residuals.insert("peripheral_jordan".to_string(), jordan);
    verdicts.insert("peripheral_semisimple".to_string(), judge("peripheral_semisimple", jordan, res_tol, rank_ok));
    // product rule on sampled products
    let mut prod: f64 = 0.0;
    for (a, ea) in eigenspaces.iter().enumerate() {
        for (b, eb) in eigenspaces.iter().enumerate() {
            let target = lambdas[(a + b) % m];
            for x in ea.basis.iter().take(3) {
                for y in eb.basis.iter().take(3) {
                    let xy = x * y;
                    prod = prod.max(m_alg.norm2(&(&ch.apply(&xy) - &xy.scale(target))));
                }
            }
        }
    }
    residuals.insert("eigenspace_product_rule".to_string(), prod);
    verdicts.insert("eigenspace_product_rule".to_string(), judge("eigenspace_product_rule", prod, res_tol, true));
    // fixed algebra
    let fixed_owned = eigenspaces[0].basis.clone();
    let fixed = &fixed_owned;
    let fixed_ops: Vec<CMat> = fixed.iter().map(|x| gns.left(x)).collect();
    let (fixed_center_dim, fixed_is_factor) = match algebra_core::center_and_factor(&fixed_ops) {
        Ok((c, f)) => (Some(c.len()), Some(f)),
        Err(_) => (None, None),
    };
    verdicts.insert("fixed_space_is_algebra".to_string(), Verdict::from_bool(fixed_is_factor.is_some()));
    let relative = if ch.is_cp() { Some(relative_irreducibility(ch, seed)?) } else { None };
    let rel_flag = relative.as_ref().map(|r| r.flag).unwrap_or(false);
    let n_vecs: Vec<Element> =
        t.n().units().into_iter().map(|(i, k, l)| t.n_to_m(&t.n().unit(i, k, l))).collect();
    let n_span = span_of_tol(ch, &n_vecs, tol.rank);
    let fixed_span = span_of_tol(ch, fixed, tol.rank);
    let eq_gap = if n_span.ncols() == fixed_span.ncols() { linalg::subspace_gap(&n_span, &fixed_span) } else { 1.0 };
    residuals.insert("fixed_vs_n_gap".to_string(), eq_gap);
    let fixed_equals_n = Some(eq_gap < res_tol);
    if rel_flag {
        verdicts.insert("fixed_algebra_equals_n".to_string(), judge("fixed_algebra_equals_n", eq_gap, res_tol, true));
    } else {
        verdicts.insert("fixed_algebra_equals_n".to_string(), Verdict::Skipped("not relatively irreducible".into()));
    }
    // unitaries
    let want_unitaries = fixed_is_factor == Some(true) || (rel_flag && eq_gap < res_tol);
    let mut unitaries: Vec<Option<UnitaryGenerator>> = vec![None; m];
    if want_unitaries {
        let mut worst_u: f64 = 0.0;
        let mut worst_e: f64 = 0.0;
        let mut worst_g: f64 = 0.0;
        let mut ok = true;
        for s in 0..m {
            match unitary_generator(ch, lambdas[s], &eigenspaces[s].basis, fixed, seed.wrapping_add(s as u64)) {
                Ok(u) => {
                    worst_u = worst_u.max(u.unitarity);
                    worst_e = worst_e.max(u.eigen);
                    worst_g = worst_g.max(u.subspace_gap);
                    unitaries[s] = Some(u);
                }
                Err(_) => ok = false,
            }
        }
        residuals.insert("unitary_unitarity".to_string(), worst_u);
        residuals.insert("unitary_eigen".to_string(), worst_e);
        residuals.insert("unitary_subspace_gap".to_string(), worst_g);
        verdicts.insert("unitaries".to_string(), judge("unitaries", worst_u.max(worst_e), unit_tol, ok));
        verdicts.insert("unitary_subspace_equality".to_string(), judge("unitary_subspace_equality", worst_g, res_tol, ok));
        if ok {
            let mut gl: f64 = 0.0;
            for a in 0..m {
                for b in 0..m {
                    let ua = &unitaries[a].as_ref().unwrap().u;
                    let ub = &unitaries[b].as_ref().unwrap().u;
                    let p = ua * ub;
                    gl = gl.max(m_alg.norm2(&(&ch.apply(&p) - &p.scale(lambdas[(a + b) % m]))));
                }
            }
            residuals.insert("unitary_group_law".to_string(), gl);
            verdicts.insert("unitary_group_law".to_string(), judge("unitary_group_law", gl, res_tol, true));
        }
        // m-fold products of M(Φ, ω) span M(Φ, 1)
        if m > 1 {
            let gen = &eigenspaces[1].basis;
            let mut r = rng::stream(seed, 41);
            let samples = 2 * fixed.len() + 2;
            let mut prods = Vec::with_capacity(samples);
            for _ in 0..samples {
                let mut p = m_alg.one();
                for _ in 0..m {
                    let coeffs = rng::gaussian_matrix(&mut r, gen.len(), 1);
                    let mut x = m_alg.zero();
                    for (b, c) in gen.iter().zip(coeffs.iter()) {
                        x.axpy(*c, b);
                    }
                    p = &p * &x;
                }
                prods.push(p);
            }
            let ps = span_of_tol(ch, &prods, tol.rank);
            let gap = if ps.ncols() == fixed_span.ncols() { linalg::subspace_gap(&ps, &fixed_span) } else { 1.0 };
            residuals.insert("m_fold_product_span_gap".to_string(), gap);
            verdicts.insert("m_fold_product_span".to_string(), judge("m_fold_product_span", gap, span_tol, true));
        }
    } else {
        let reason = "fixed algebra not a factor".to_string();
        for k in ["unitaries", "unitary_subspace_equality", "unitary_group_law", "m_fold_product_span"] {
            verdicts.insert(k.to_string(), Verdict::Skipped(reason.clone()));
        }
    }
    Ok(PhaseGroupCertificate {
        spectrum,
        m,
        generator_phase: lambdas.get(1).cloned().unwrap_or(cr(1.0)),
        peripheral,
        eigenspaces,
        unitaries,
        fixed_dim: fixed.len(),
        fixed_is_factor,
        fixed_center_dim,
        fixed_equals_n,
        relative,
        residuals,
        verdicts,
        thresholds,
    })
}

/// Convenience: the peripheral projections of `y_Φ` via the two-box engine.
pub fn two_box_peripheral(ch: &BimoduleChannel) -> Result<qfa::PeripheralDecomposition, SpectralError> {
    Ok(ch.spaces().peripheral_decomposition(&ch.y)?)
}

//! The acceptance suite: eleven criteria, each reported as one pass/fail line with its
//! worst residuals. Reports are deterministic; wall-clock budgets enter only as verdicts.

use super::analyze::{self, AnalyzeOptions};
use super::generate::{self, random_cpb_channel};
use super::instance::{parse_instance, GeneratorParams, InstanceSpec};
use super::HarnessError;
use crate::algebra_core::{Element, MultiMatrixAlgebra};
use crate::channel::{BimoduleChannel, ChannelError};
use crate::linalg;
use crate::qfa::{Side, TwoBoxElement, TwoBoxSpaces};
use crate::rng;
use crate::spectral::{self, ProofMode, Tolerances, Verdict};
use crate::tower::{Inclusion, JonesTower, TowerOptions};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

const SEED: u64 = 20240917;

#[derive(Debug, Clone)]
pub struct SelftestOptions {
    /// Multiplies every residual bound; `0` makes every residual comparison fail.
    pub tolerance_scale: f64,
    /// Restrict to these criterion ids (all when `None`).
    pub only: Option<Vec<usize>>,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions { tolerance_scale: 1.0, only: None }
    }
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub residuals: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub criteria: Vec<CriterionResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn failing(&self) -> Vec<usize> {
        self.criteria.iter().filter(|c| !c.passed).map(|c| c.id).collect()
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            super::exit::PASS
        } else {
            super::exit::CHECK_FAILED
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.criteria {
            let _ = writeln!(s, "criterion {:>2} [{}] {}", c.id, if c.passed { "PASS" } else { "FAIL" }, c.title);
            if !c.detail.is_empty() {
                let _ = writeln!(s, "    {}", c.detail);
            }
            for (k, v) in &c.residuals {
                let _ = writeln!(s, "    {k} = {v:e}");
            }
        }
        let n_pass = self.criteria.iter().filter(|c| c.passed).count();
        let _ = writeln!(s, "selftest: {n_pass}/{} criteria pass", self.criteria.len());
        s
    }
}

/// Accumulates residuals and the verdict of one criterion.
struct Ctx {
    scale: f64,
    ok: bool,
    res: BTreeMap<String, f64>,
    notes: Vec<String>,
}

impl Ctx {
    fn new(scale: f64) -> Self {
        Ctx { scale, ok: true, res: BTreeMap::new(), notes: Vec::new() }
    }
    /// Records the running maximum of `name` and requires it to stay below `limit`.
    fn below(&mut self, name: &str, value: f64, limit: f64) {
        let e = self.res.entry(name.to_string()).or_insert(0.0);
        *e = e.max(value);
        if !(value < limit * self.scale) {
            self.ok = false;
        }
    }
    fn require(&mut self, cond: bool, what: impl Into<String>) {
        if !cond {
            self.ok = false;
            self.notes.push(what.into());
        }
    }
    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }
    fn budget(&mut self, what: &str, t: Instant, limit: Duration) {
        self.require(t.elapsed() < limit, format!("{what}: runtime budget {limit:?} exceeded"));
    }
}

type Outcome = Result<Ctx, HarnessError>;

fn spaces(incl: Inclusion) -> Result<Arc<TwoBoxSpaces>, HarnessError> {
    Ok(Arc::new(TwoBoxSpaces::new(JonesTower::build(incl, TowerOptions::default())?)?))
}

fn family_channel(name: &str, n: usize) -> Result<BimoduleChannel, HarnessError> {
    let p = GeneratorParams { n: Some(n), ..GeneratorParams::default() };
    analyze::build(&generate::generate(name, &p, SEED)?, &AnalyzeOptions::default())
}

fn standard_inclusions() -> Vec<(String, Inclusion)> {
    vec![
        ("D3<M3".into(), Inclusion::diagonal_in_full(3)),
        ("C<M3".into(), Inclusion::scalars_in_full(3)),
    ]
}

/// Random element of a two-box space with Gaussian coordinates.
fn random_two_box(s: &TwoBoxSpaces, side: Side, r: &mut rng::PgcRng) -> TwoBoxElement {
    let c = rng::gaussian_matrix(r, s.dim(), 1);
    s.from_coords(side, &c.column(0).into_owned())
}

fn random_in(s: &TwoBoxSpaces, side: Side, r: &mut rng::PgcRng, f: impl Fn(&mut rng::PgcRng, &MultiMatrixAlgebra) -> Element) -> TwoBoxElement {
    let rc = s.relative_commutant(side);
    let big = match side {
        Side::Plus => s.tower.m1(),
        Side::Minus => s.tower.m2(),
    };
    TwoBoxElement { side, value: rc.to_big(&f(r, &rc.algebra), big) }
}

// 1
fn multipliers(c: &mut Ctx) -> Result<(), HarnessError> {
    let mut incls: Vec<(String, Inclusion)> = (2..=5).map(|n| (format!("D{n}"), Inclusion::diagonal_in_full(n))).collect();
    incls.extend((2..=4).map(|n| (format!("C<M{n}"), Inclusion::scalars_in_full(n))));
    for (name, incl) in incls {
        let t0 = Instant::now();
        let s = spaces(incl)?;
        let mu = s.mu();
        let id = BimoduleChannel::identity(&s)?;
        let en = BimoduleChannel::expectation(&s)?;
        let want_id = s.e2().value.scale_re(mu.powf(1.5));
        let want_en = s.one(Side::Minus).value.scale_re(mu.sqrt());
        c.below("id_hat_vs_mu^{3/2}e2", (&id.hat.value - &want_id).norm_inf(), 1e-10);
        c.below("E_N_hat_vs_mu^{1/2}", (&en.hat.value - &want_en).norm_inf(), 1e-10);
        c.budget(&name, t0, Duration::from_secs(1));
    }
    Ok(())
}

// 2
fn cp_equivalence(c: &mut Ctx) -> Result<(), HarnessError> {
    let t0 = Instant::now();
    let mut incls = standard_inclusions();
    incls.push(("C<M2".into(), Inclusion::scalars_in_full(2)));
    let (mut agree, mut total, mut n_cp) = (0usize, 0usize, 0usize);
    for (k, (_, incl)) in incls.into_iter().enumerate() {
        let s = spaces(incl)?;
        let mu = s.mu();
        let mut r = rng::stream(SEED, 200 + k as u64);
        for _ in 0..200 {
            let a = random_in(&s, Side::Minus, &mut r, rng::random_positive);
            let a = a.scale_re(1.0 / a.norm_inf());
            let shift = rng::uniform(&mut r, 0.0, 0.2);
            let h = a.sub(&s.one(Side::Minus).scale_re(shift))?;
            let y = s.rotate180(&s.fourier_inv(&h)?).scale_re(1.0 / mu);
            total += 1;
            match BimoduleChannel::from_y(&s, &y) {
                Ok(ch) => {
                    let by_hat = ch.cp.hat_margin >= -1e-9 * c.scale;
                    let by_choi = ch.cp.choi_margin >= -1e-9 * c.scale;
                    agree += usize::from(by_hat == by_choi);
                    n_cp += usize::from(by_hat && by_choi);
                }
                Err(ChannelError::OracleDisagreement { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    c.require(agree == total, format!("oracles disagree on {} of {total} maps", total - agree));
    c.note(format!("{agree}/{total} verdicts agree ({n_cp} CP, {} not CP)", total - n_cp));
    c.require(n_cp > 0 && n_cp < total, "sample does not exercise both verdicts");
    // transpose on M_2 over C
    let s = spaces(Inclusion::scalars_in_full(2))?;
    let gns = s.tower.gns_m();
    let d = gns.dim();
    let mut p = linalg::zeros(d, d);
    for k in 0..2 {
        for l in 0..2 {
            p[(gns.index(0, l, k), gns.index(0, k, l))] = linalg::ONE;
        }
    }
    let tr = BimoduleChannel::from_action(&s, p)?;
    c.require(
        !tr.is_cp() && tr.cp.hat_margin < -1e-9 && tr.cp.choi_margin < -1e-9,
        "transpose map not rejected by both oracles",
    );
    c.res.insert("transpose_multiplier_margin".into(), tr.cp.hat_margin);
    c.res.insert("transpose_choi_margin".into(), tr.cp.choi_margin);
    c.budget("total", t0, Duration::from_secs(30));
    Ok(())
}

fn random_channels(count: usize, stream: u64) -> Result<Vec<BimoduleChannel>, HarnessError> {
    let sp: Vec<Arc<TwoBoxSpaces>> = standard_inclusions().into_iter().map(|(_, i)| spaces(i)).collect::<Result<_, _>>()?;
    (0..count).map(|k| random_cpb_channel(&sp[k % sp.len()], SEED ^ (stream << 32) ^ k as u64)).collect()
}

// 3
fn spectrum_equality(c: &mut Ctx) -> Result<(), HarnessError> {
    let t0 = Instant::now();
    for ch in random_channels(100, 3)? {
        let d = linalg::hausdorff(&ch.y.value.eigenvalues(), &linalg::eigenvalues(&ch.action));
        c.below("hausdorff_sigma_phi_vs_sigma_y", d, 1e-8);
    }
    c.budget("total", t0, Duration::from_secs(30));
    Ok(())
}

// 4
fn pimsner_popa(c: &mut Ctx) -> Result<(), HarnessError> {
    let towers: Vec<JonesTower> = vec![
        JonesTower::build(Inclusion::diagonal_in_full(3), TowerOptions::default())?,
        JonesTower::build(Inclusion::scalars_in_full(3), TowerOptions::default())?,
        JonesTower::build(
            Inclusion::markov(
                vec![
                    crate::algebra_core::Block { label: "a".into(), size: 1 },
                    crate::algebra_core::Block { label: "b".into(), size: 1 },
                ],
                vec![vec![1, 1], vec![1, 0]],
            )?,
            TowerOptions::default(),
        )?,
    ];
    let mut r = rng::stream(SEED, 4);
    let mut worst = f64::INFINITY;
    for k in 0..100 {
        let t = &towers[k % towers.len()];
        let x = rng::random_positive(&mut r, t.m());
        let x = x.scale_re(1.0 / x.norm_inf());
        worst = worst.min(t.pp_inequality_check(&x)?);
    }
    c.res.insert("pp_inequality_min_eig".into(), worst);
    c.require(worst >= -1e-9 * c.scale, "E_N(x) - x/mu has a negative eigenvalue");
    for ch in random_channels(50, 4)? {
        let pd = ch.pp_dominance()?;
        c.below("dominance_order_defect", pd.order_defect, 1e-9);
        c.below("dominance_norm_defect", pd.norm_defect, 1e-9);
    }
    for (_, incl) in standard_inclusions() {
        let s = spaces(incl)?;
        let pd = BimoduleChannel::identity(&s)?.pp_dominance()?;
        c.below("identity_c_vs_mu_relative", (pd.c - s.mu()).abs() / s.mu(), 1e-8);
    }
    Ok(())
}

// 5
fn phase_groups(c: &mut Ctx) -> Result<(), HarnessError> {
    for n in 2..=6 {
        let t0 = Instant::now();
        let ch = family_channel("ad_unitary", n)?;
        let cert = spectral::certify_phase_group(&ch, SEED, &Tolerances::default())?;
        c.require(cert.m == n, format!("n = {n}: phase group order {}", cert.m));
        c.require(cert.fixed_dim == n && cert.fixed_equals_n == Some(true), format!("n = {n}: fixed algebra is not D_n"));
        let g = |k: &str| cert.residuals.get(k).cloned().unwrap_or(f64::INFINITY);
        c.below("unitarity", g("unitary_unitarity"), 1e-9);
        c.below("unitary_eigen", g("unitary_eigen"), 1e-9);
        c.below("subspace_equality_gap", g("unitary_subspace_gap"), 1e-8);
        c.below("m_fold_product_span_gap", g("m_fold_product_span_gap"), 1e-7);
        c.budget(&format!("n = {n}"), t0, Duration::from_secs(5));
    }
    Ok(())
}

// 6
fn evans_hoegh_krohn(c: &mut Ctx) -> Result<(), HarnessError> {
    let ch = family_channel("shift_mixture", 3)?;
    c.require(ch.is_cp() && ch.is_unital, "generator is not unital CP");
    let cert = spectral::certify_phase_group(&ch, SEED, &Tolerances::default())?;
    let rel = cert.relative.as_ref().map(|r| r.flag).unwrap_or(false);
    c.require(rel && cert.fixed_dim == 1, "map is not irreducible");
    c.require(cert.verdicts.get("gamma_closed") == Some(&Verdict::Pass) && cert.m == 3, format!("phase group order {}", cert.m));
    let m = ch.spaces().tower.m();
    for es in &cert.eigenspaces {
        c.require(es.basis.len() == 1, format!("eigenspace at {} has dimension {}", es.alpha, es.basis.len()));
        for x in &es.basis {
            let (v, a) = m.polar(x)?;
            let scale = m.trace(&a).re;
            let flat = (&a - &m.one().scale_re(scale)).norm_inf() / scale;
            let unit = (&(&v * &v.adjoint()) - &m.one()).norm_inf();
            c.below("polar_part_unitarity", flat.max(unit), 1e-9);
        }
    }
    Ok(())
}

fn ad_y(n: usize) -> Result<(Arc<TwoBoxSpaces>, TwoBoxElement), HarnessError> {
    let ch = family_channel("ad_unitary", n)?;
    Ok((ch.spaces().clone(), ch.y.clone()))
}

// 7
fn frobenius_engine(c: &mut Ctx) -> Result<(), HarnessError> {
    let (s3, y3) = ad_y(3)?;
    let (s4, y4) = ad_y(4)?;
    let e1 = s3.e1();
    let mut rate_ok = true;
    for (name, s, x) in [("ad3", &s3, y3), ("ad4", &s4, y4), ("e1", &s3, e1)] {
        let d = s.peripheral_decomposition(&x)?;
        let r = |k: &str| d.residuals.get(k).cloned().unwrap_or(f64::INFINITY);
        c.below("a_normalization", r("a_norm"), 1e-8);
        c.require(d.checks.get("c_q1_biprojection") == Some(&true), format!("{name}: q1 is not a biprojection"));
        c.below("c_riesz_vs_cesaro_n1000", r("c_cesaro_n1000"), 1e-6);
        if r("c_cesaro_n1000") >= 1e-6 {
            c.note(format!(
                "{name}: Cesaro(1000) deviation {:e}, exact finite-n bound {:e}",
                r("c_cesaro_n1000"),
                r("c_cesaro_rate_bound")
            ));
        }
        rate_ok &= d.checks.get("c_cesaro_within_rate") == Some(&true);
        c.require(d.checks.get("d_right_shifts") == Some(&true), format!("{name}: shift law fails"));
        c.below("d_shift_law", r("d_right_shifts"), 1e-7);
        c.require(d.checks.get("e_sum_biprojection") == Some(&true), format!("{name}: sum of q_j is not a biprojection"));
        c.below("e_sum_vs_riesz_xxstar", r("e_sum_vs_riesz_xxstar"), 1e-7);
        c.below("f_group_law", r("f_group_law"), 1e-7);
    }
    c.note(format!("Cesaro deviations within the exact O(1/n) bound: {rate_ok}"));
    Ok(())
}

// 8
fn two_biprojection(c: &mut Ctx) -> Result<(), HarnessError> {
    let (s, y) = ad_y(3)?;
    let d = s.peripheral_decomposition(&y)?;
    let mut z = s.zero(Side::Plus);
    for (j, q) in d.projections.iter().enumerate() {
        z = z.add(&q.scale_re(1.0 + j as f64))?;
    }
    let rep = s.two_biprojection_check(&z)?;
    let g = |k: &str| rep.residuals.get(k).cloned().unwrap_or(f64::INFINITY);
    c.require(rep.m == 3, format!("y = sum c_j q_j: m = {} (q = p = R(y) = 1), expected 3", rep.m));
    c.below("q_equals_sum_of_shifts", g("q_equals_sum"), 1e-7);
    c.below("shift_law", g("shift_law"), 1e-7);
    c.below("cyclic_closure", g("cyclic_closure"), 1e-7);
    let single = s.two_biprojection_check(&d.projections[1])?;
    c.note(format!("single shift y = q_2: m = {}, residuals pass = {}", single.m, single.passed));
    for (name, x) in [("e1", s.e1()), ("1", s.one(Side::Plus))] {
        let r = s.two_biprojection_check(&x)?;
        c.require(r.m == 1 && r.passed, format!("y = {name}: m = {}", r.m));
    }
    Ok(())
}

fn check_relative(c: &mut Ctx, label: &str, ch: &BimoduleChannel) -> Result<(), HarnessError> {
    let r = spectral::relative_irreducibility(ch, SEED)?;
    let mode = if r.flag_i {
        ProofMode::Proof
    } else if r.flag_iii {
        ProofMode::Evidence
    } else {
        ProofMode::Disproof
    };
    c.require(r.flag_i == r.flag_iii, format!("{label}: criterion (i) = {} but (iii) = {}", r.flag_i, r.flag_iii));
    c.require(r.consistent && r.mode == mode, format!("{label}: bookkeeping {:?}", r.mode));
    Ok(())
}

// 9
fn relative_irreducibility(c: &mut Ctx) -> Result<(), HarnessError> {
    for n in 2..=5 {
        check_relative(c, &format!("ad_unitary({n})"), &family_channel("ad_unitary", n)?)?;
    }
    for (name, incl) in standard_inclusions() {
        let s = spaces(incl)?;
        check_relative(c, &format!("E_N on {name}"), &BimoduleChannel::expectation(&s)?)?;
        let id = BimoduleChannel::identity(&s)?;
        check_relative(c, &format!("id on {name}"), &id)?;
        let r = spectral::relative_irreducibility(&id, SEED)?;
        match (&r.mode, &r.witness) {
            (ProofMode::Disproof, Some(p)) => {
                let t = &s.tower;
                let off_n = p.dist(&t.n_to_m(&t.base.expect(p)));
                c.require(p.is_projection(1e-9) && off_n > 1e-6, format!("id on {name}: witness is not a projection outside N"));
                c.res.insert(format!("id_{name}_witness_distance_to_N"), off_n);
            }
            _ => c.require(false, format!("id on {name}: no disproof witness")),
        }
    }
    for (k, ch) in random_channels(40, 9)?.iter().enumerate() {
        check_relative(c, &format!("random channel {k}"), ch)?;
    }
    Ok(())
}

// 10
fn qfa_sweeps(c: &mut Ctx) -> Result<(), HarnessError> {
    let named = standard_inclusions();
    let sp: Vec<Arc<TwoBoxSpaces>> = named.iter().map(|(_, i)| spaces(i.clone())).collect::<Result<_, _>>()?;
    // both inequalities below are theorems for irreducible inclusions (N′∩M = C); record the
    // hypothesis so a violation reads as what it is
    for ((name, _), s) in named.iter().zip(&sp) {
        c.note(format!("{name}: dim N'∩M = {}", s.tower.nm.dim()));
    }
    let mut r = rng::stream(SEED, 10);
    for k in 0..200 {
        let s = &sp[k % 2];
        let x = random_two_box(s, Side::Plus, &mut r);
        let fx = s.fourier(&x)?;
        c.below("plancherel_relative", (s.norm2(&fx) - s.norm2(&x)).abs() / s.norm2(&x), 1e-10);
    }
    let mut hy_violations = vec![0usize; sp.len()];
    for k in 0..100 {
        let s = &sp[k % 2];
        let x = random_two_box(s, Side::Plus, &mut r);
        let excess = (s.fourier(&x)?.norm_inf() - s.norm1(&x) / s.delta).max(0.0) / s.norm1(&x);
        c.below("hausdorff_young_excess_relative", excess, 1e-9);
        hy_violations[k % 2] += usize::from(excess >= 1e-9);
    }
    let (mut eq_cases, mut inconsistent) = (0usize, 0usize);
    let mut ss_violations = vec![0usize; sp.len()];
    for k in 0..100 {
        let s = &sp[k % 2];
        let p = random_in(s, Side::Plus, &mut r, rng::random_projection);
        let q = random_in(s, Side::Plus, &mut r, rng::random_projection);
        if p.norm_inf() == 0.0 || q.norm_inf() == 0.0 {
            continue;
        }
        let ss = s.sum_set(&p, &q)?;
        c.below("sum_set_deficit", (ss.lower_bound - ss.s).max(0.0), 1e-8);
        ss_violations[k % 2] += usize::from(!ss.inequality_holds);
        // S(p∗q) = tr₂(q) exactly when (δ/tr₂ p) p∗q is a projection
        let at_tq = (ss.s - s.tr2(&q).re).abs() < 1e-8;
        eq_cases += usize::from(ss.equality_case);
        inconsistent += usize::from(ss.equality_case != at_tq);
    }
    for s in &sp {
        let (e1, one) = (s.e1(), s.one(Side::Plus));
        for (p, q) in [(&e1, &e1), (&one, &one), (&e1, &one)] {
            let ss = s.sum_set(p, q)?;
            c.require(ss.equality_case && (ss.s - ss.lower_bound).abs() < 1e-8, "biprojection pair not detected as equality case");
        }
    }
    let per = |v: &[usize]| named.iter().zip(v).map(|((n, _), k)| format!("{n}: {k}/50")).collect::<Vec<_>>().join(", ");
    c.note(format!("Hausdorff-Young violations: {}", per(&hy_violations)));
    c.note(format!("sum-set violations: {}", per(&ss_violations)));
    c.require(inconsistent == 0, format!("equality-case criterion disagrees with S = tr2(q) on {inconsistent} random pairs"));
    c.note(format!("random pairs in the equality case: {eq_cases}"));
    for k in 0..100 {
        let s = &sp[k % 2];
        let a = random_in(s, Side::Minus, &mut r, rng::random_positive);
        let b = random_in(s, Side::Minus, &mut r, rng::random_positive);
        let conv = s.convolve(&a, &b)?;
        let min = conv.value.hermitian_part().min_eig() / (a.norm_inf() * b.norm_inf());
        c.below("schur_product_negativity", (-min).max(0.0), 1e-9);
    }
    Ok(())
}

/// Instance used for the determinism criterion and by the CLI tests.
pub fn determinism_instance() -> Result<InstanceSpec, HarnessError> {
    generate::generate("ad_unitary", &GeneratorParams { n: Some(3), ..GeneratorParams::default() }, 7)
}

// 11
fn determinism(c: &mut Ctx, others_pass: bool, started: Instant) -> Result<(), HarnessError> {
    let spec = determinism_instance()?;
    let text = serde_json::to_string_pretty(&spec).expect("instance serializes");
    let reparsed = parse_instance(&text)?;
    c.require(reparsed == spec, "instance does not round-trip");
    let a = analyze::run_analyze(&reparsed, &AnalyzeOptions::default())?.to_canonical_json();
    let b = analyze::run_analyze(&parse_instance(&text)?, &AnalyzeOptions::default())?.to_canonical_json();
    c.require(a == b, "certificates differ between runs");
    c.require(others_pass, "selftest exit status is nonzero: other criteria fail");
    c.require(started.elapsed() < Duration::from_secs(300), "selftest exceeded 5 minutes");
    Ok(())
}

type Runner = fn(&mut Ctx) -> Result<(), HarnessError>;

const CRITERIA: &[(usize, &str, Runner)] = &[
    (1, "Fourier multipliers of id and E_N", multipliers),
    (2, "CP iff Fourier-positive (Choi oracle vs multiplier)", cp_equivalence),
    (3, "spectrum of the channel equals spectrum of y", spectrum_equality),
    (4, "Pimsner-Popa inequality and dominance", pimsner_popa),
    (5, "phase groups of ad_unitary(2..6)", phase_groups),
    (6, "irreducible maps over C: cyclic phase group, unitary eigenvectors", evans_hoegh_krohn),
    (7, "two-box peripheral decomposition (i)-(vi)", frobenius_engine),
    (8, "biprojections generated by y and y*ybar", two_biprojection),
    (9, "relative irreducibility: criteria (i) and (iii)", relative_irreducibility),
    (10, "Plancherel, Hausdorff-Young, sum-set, Schur product", qfa_sweeps),
];

fn finish(id: usize, title: &'static str, out: Outcome) -> CriterionResult {
    match out {
        Ok(c) => CriterionResult { id, title, passed: c.ok, detail: c.notes.join("; "), residuals: c.res },
        Err(e) => CriterionResult { id, title, passed: false, detail: format!("error: {e}"), residuals: BTreeMap::new() },
    }
}

pub fn run_selftest(opts: &SelftestOptions) -> SelftestReport {
    let started = Instant::now();
    let wanted = |id: usize| opts.only.as_ref().map_or(true, |v| v.contains(&id));
    let mut criteria = Vec::new();
    for &(id, title, run) in CRITERIA {
        if !wanted(id) {
            continue;
        }
        let mut c = Ctx::new(opts.tolerance_scale);
        let out = run(&mut c).map(|_| c);
        criteria.push(finish(id, title, out));
    }
    if wanted(11) {
        let others_pass = criteria.iter().all(|c| c.passed) && opts.only.is_none();
        let mut c = Ctx::new(opts.tolerance_scale);
        let out = determinism(&mut c, others_pass, started).map(|_| c);
        criteria.push(finish(11, "determinism and selftest exit status", out));
    }
    SelftestReport { criteria }
}

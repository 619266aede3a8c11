//! Quantum Fourier analysis on the two-box spaces `P₊ = N′∩M₁` and `P₋ = M′∩M₂`:
//! Fourier transform, convolution, contragredient, biprojections, shifts, the sum-set
//! estimate and the peripheral (Frobenius) decomposition engine.
//!
//! Traces here are the unnormalized two-box traces `tr₂ = μ·τ`, so `tr₂(1) = μ` and
//! `tr₂(e₁) = 1`; `δ = √μ`.

use crate::algebra_core::{self, Element, MultiMatrixAlgebra};
use crate::linalg::{self, cr, CMat, CVec};
use crate::tower::{JonesTower, RelativeCommutant};
use num_complex::Complex64;
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QfaError {
    #[error("element is on the wrong side for this operation")]
    WrongSide,
    #[error("elements live on different sides")]
    SideMismatch,
    #[error("element is not a projection (residual {residual:e})")]
    NotAProjection { residual: f64 },
    #[error("first argument is not a biprojection")]
    NotABiprojection,
    #[error("range of convolution powers did not stabilize by k = {k}")]
    NoStabilization { k: usize },
    #[error("element is not Fourier-positive (min eigenvalue of transform {min_eig:e})")]
    NotFPositive { min_eig: f64 },
    #[error("normalization hypothesis fails: {0}")]
    NotNormalized(String),
    #[error("peripheral eigenvalues do not fit the m-th roots of unity for any m <= {max_m}")]
    GroupFitFailed { max_m: usize },
    #[error("decomposition residual {residual:e} exceeds tolerance")]
    DecompositionFailed { residual: f64 },
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("element is not in the relative commutant (residual {residual:e})")]
    NotInRelativeCommutant { residual: f64 },
    #[error("Fourier transform is not proportional to an isometry (defect {defect:e})")]
    CalibrationFailed { defect: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

/// An element of `P₊` (stored in `M₁`) or `P₋` (stored in `M₂`).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoBoxElement {
    pub side: Side,
    pub value: Element,
}

impl TwoBoxElement {
    pub fn plus(value: Element) -> Self {
        TwoBoxElement { side: Side::Plus, value }
    }
    pub fn minus(value: Element) -> Self {
        TwoBoxElement { side: Side::Minus, value }
    }
    pub fn adjoint(&self) -> Self {
        TwoBoxElement { side: self.side, value: self.value.adjoint() }
    }
    pub fn scale(&self, s: Complex64) -> Self {
        TwoBoxElement { side: self.side, value: self.value.scale(s) }
    }
    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(cr(s))
    }
    pub fn add(&self, o: &Self) -> Result<Self, QfaError> {
        if self.side != o.side {
            return Err(QfaError::SideMismatch);
        }
        Ok(TwoBoxElement { side: self.side, value: &self.value + &o.value })
    }
    pub fn sub(&self, o: &Self) -> Result<Self, QfaError> {
        if self.side != o.side {
            return Err(QfaError::SideMismatch);
        }
        Ok(TwoBoxElement { side: self.side, value: &self.value - &o.value })
    }
    pub fn mul(&self, o: &Self) -> Result<Self, QfaError> {
        if self.side != o.side {
            return Err(QfaError::SideMismatch);
        }
        Ok(TwoBoxElement { side: self.side, value: &self.value * &o.value })
    }
    pub fn norm_inf(&self) -> f64 {
        self.value.norm_inf()
    }
    pub fn min_eig(&self) -> f64 {
        self.value.min_eig()
    }
}

/// The two-box spaces of a tower together with the calibrated Fourier transform.
#[derive(Debug, Clone)]
pub struct TwoBoxSpaces {
    pub tower: JonesTower,
    pub delta: f64,
    /// `F` in the `tr₂`-orthonormal bases of `P₊` and `P₋`.
    f: CMat,
    finv: CMat,
    plus_on: Vec<Element>,
    minus_on: Vec<Element>,
    plus_scale: Vec<f64>,
    minus_scale: Vec<f64>,
    /// The positive constant dividing the `μ^{3/2} E_{M′∩M₂}(x e₂ e₁)` map.
    pub calibration: f64,
    /// `‖F^*F - 1‖_F` after calibration (bounds the operator-norm defect).
    pub isometry_defect: f64,
    span: OnceLock<Result<SpanningSet, (usize, usize)>>,
}

/// The spanning set `{x e₁ y Ω₁}` of `L²(M₁)`, `x, y` running over the matrix units of `M`,
/// with a right inverse. It depends only on the tower, so every multiplier fit shares it.
#[derive(Debug, Clone)]
pub struct SpanningSet {
    /// Column `a·n + b` is `x_a e₁ x_b Ω₁`.
    pub v: CMat,
    /// `V^*(VV^*)^{-1}`: `op = W·pinv` is the least-squares solution of `op·V = W`.
    pub pinv: CMat,
}

impl SpanningSet {
    fn build(tower: &JonesTower) -> Result<Self, (usize, usize)> {
        let m = tower.m();
        let gns1 = tower.gns_m1();
        let d1 = gns1.dim();
        let um: Vec<Element> = m.units().into_iter().map(|(i, k, l)| tower.m_to_m1(&m.unit(i, k, l))).collect();
        let n = um.len();
        let mut v = linalg::zeros(d1, n * n);
        for (a, x) in um.iter().enumerate() {
            let xe = x * tower.e1();
            for (b, y) in um.iter().enumerate() {
                v.set_column(a * n + b, &gns1.vec(&(&xe * y)));
            }
        }
        let gram = linalg::mm(&v, &v.adjoint());
        let chol = gram.cholesky().ok_or_else(|| (linalg::rank(&v, 1e-10), d1))?;
        let pinv = linalg::mm(&v.adjoint(), &chol.inverse());
        Ok(SpanningSet { v, pinv })
    }
}

fn basis_scales(rc: &RelativeCommutant, big: &MultiMatrixAlgebra, mu: f64) -> Vec<f64> {
    rc.basis().iter().map(|g| 1.0 / (mu * big.norm2(g).powi(2)).sqrt()).collect()
}

fn orthonormal(rc: &RelativeCommutant, big: &MultiMatrixAlgebra, mu: f64) -> Vec<Element> {
    rc.basis().iter().zip(basis_scales(rc, big, mu)).map(|(g, s)| g.scale_re(s)).collect()
}

impl TwoBoxSpaces {
    pub fn new(tower: JonesTower) -> Result<Self, QfaError> {
        let mu = tower.mu;
        let plus_on = orthonormal(&tower.plus, tower.m1(), mu);
        let minus_on = orthonormal(&tower.minus, tower.m2(), mu);
        let d = plus_on.len();
        // e₂e₁ = V V^* e₁ per block of M₂ with V spanning the range of e₂, so every entry
        // ⟨g_j, ι(b_k) e₂ e₁⟩ is a trace of (V^* e₁ g_j^*)(ι(b_k) V) with thin factors
        let e1_2 = tower.m1_to_m2(tower.e1());
        let m2w = tower.m2().weights().to_vec();
        let vs: Vec<CMat> = tower
            .e2()
            .blocks
            .iter()
            .map(linalg::projection_range)
            .collect();
        let ve1: Vec<CMat> = vs.iter().zip(&e1_2.blocks).map(|(v, e)| v.adjoint() * e).collect();
        let minus_scale = basis_scales(&tower.minus, tower.m2(), mu);
        let qs: Vec<Vec<CMat>> = tower
            .minus
            .basis()
            .iter()
            .map(|g| ve1.iter().zip(&g.blocks).map(|(a, gb)| a * gb.adjoint()).collect())
            .collect();
        let pref = mu * mu.powf(1.5);
        // tr(q p) over all pairs at once: rows of `qm` are the flattened q's, columns of `pm`
        // the flattened transposes of the p's, blocks stacked along the inner index
        let inner: usize = vs.iter().map(|v| v.nrows() * v.ncols()).sum();
        let mut qm = linalg::zeros(qs.len(), inner);
        for (j, q) in qs.iter().enumerate() {
            let mut off = 0;
            for (bl, qb) in q.iter().enumerate() {
                for a in 0..qb.nrows() {
                    for cc in 0..qb.ncols() {
                        qm[(j, off + a * qb.ncols() + cc)] = qb[(a, cc)] * cr(m2w[bl] * pref * minus_scale[j]);
                    }
                }
                off += qb.nrows() * qb.ncols();
            }
        }
        let mut pm = linalg::zeros(inner, d);
        for (k, b) in plus_on.iter().enumerate() {
            let mut off = 0;
            for (j, v) in vs.iter().enumerate() {
                let pb = tower.second.incl.embed_apply(b, j, v);
                for a in 0..pb.ncols() {
                    for cc in 0..pb.nrows() {
                        pm[(off + a * pb.nrows() + cc, k)] = pb[(cc, a)];
                    }
                }
                off += pb.nrows() * pb.ncols();
            }
        }
        let fe = linalg::mm(&qm, &pm);
        let gram = linalg::mm_ad(&fe, &fe);
        let c2 = gram.trace().re / d as f64;
        let calibration = c2.sqrt();
        let f = &fe / cr(calibration);
        // Frobenius norm: an upper bound for the operator-norm defect, without an SVD
        let isometry_defect = (&linalg::mm_ad(&f, &f) - linalg::eye(d)).norm();
        if minus_on.len() != d || isometry_defect > 1e-8 {
            return Err(QfaError::CalibrationFailed { defect: isometry_defect });
        }
        // square and isometric up to the defect, so the adjoint is the inverse
        let finv = f.adjoint();
        let plus_scale = basis_scales(&tower.plus, tower.m1(), mu);
        Ok(TwoBoxSpaces {
            delta: mu.sqrt(),
            tower,
            f,
            finv,
            plus_on,
            minus_on,
            plus_scale,
            minus_scale,
            calibration,
            isometry_defect,
            span: OnceLock::new(),
        })
    }

    /// The cached spanning set of `L²(M₁)`; on failure, its rank and the expected rank.
    pub fn spanning_set(&self) -> Result<&SpanningSet, (usize, usize)> {
        self.span.get_or_init(|| SpanningSet::build(&self.tower)).as_ref().map_err(|e| *e)
    }

    fn e_formula_raw(tower: &JonesTower, x: &Element, e2e1: &Element) -> Element {
        let xm2 = tower.m1_to_m2(x);
        let prod = &xm2 * e2e1;
        tower.minus.project(&prod, tower.m2()).scale_re(tower.mu.powf(1.5))
    }

    /// The uncalibrated map `μ^{3/2} E_{M′∩M₂}(x e₂ e₁)`.
    pub fn e_formula(&self, x: &TwoBoxElement) -> Result<TwoBoxElement, QfaError> {
        if x.side != Side::Plus {
            return Err(QfaError::WrongSide);
        }
        let e2e1 = self.tower.e2() * &self.tower.m1_to_m2(self.tower.e1());
        Ok(TwoBoxElement::minus(Self::e_formula_raw(&self.tower, &x.value, &e2e1)))
    }

    /// The uncalibrated inverse-direction map `μ^{3/2} E_{M₁}(z e₁ e₂)`.
    pub fn e_formula_back(&self, z: &TwoBoxElement) -> Result<TwoBoxElement, QfaError> {
        if z.side != Side::Minus {
            return Err(QfaError::WrongSide);
        }
        let e1 = self.tower.m1_to_m2(self.tower.e1());
        let prod = &(&z.value * &e1) * self.tower.e2();
        let back = self.tower.second.incl.expect(&prod).scale_re(self.tower.mu.powf(1.5));
        Ok(TwoBoxElement::plus(back))
    }

    pub fn mu(&self) -> f64 {
        self.tower.mu
    }

    pub fn dim(&self) -> usize {
        self.plus_on.len()
    }

    fn level(&self, side: Side) -> &MultiMatrixAlgebra {
        match side {
            Side::Plus => self.tower.m1(),
            Side::Minus => self.tower.m2(),
        }
    }

    fn basis(&self, side: Side) -> &[Element] {
        match side {
            Side::Plus => &self.plus_on,
            Side::Minus => &self.minus_on,
        }
    }

    pub fn relative_commutant(&self, side: Side) -> &RelativeCommutant {
        match side {
            Side::Plus => &self.tower.plus,
            Side::Minus => &self.tower.minus,
        }
    }

    /// Coordinates in the `tr₂`-orthonormal basis.
    pub fn coords(&self, x: &TwoBoxElement) -> CVec {
        let alg = self.level(x.side);
        let mu = self.mu();
        let scales = match x.side {
            Side::Plus => &self.plus_scale,
            Side::Minus => &self.minus_scale,
        };
        let ips = self.relative_commutant(x.side).unit_inners(&x.value, alg);
        CVec::from_iterator(self.dim(), ips.into_iter().zip(scales).map(|(ip, s)| ip * cr(mu * s)))
    }

    pub fn from_coords(&self, side: Side, c: &CVec) -> TwoBoxElement {
        let scales = match side {
            Side::Plus => &self.plus_scale,
            Side::Minus => &self.minus_scale,
        };
        let rc = self.relative_commutant(side);
        let mut y = rc.algebra.zero();
        for (idx, (i, k, l)) in rc.algebra.units().into_iter().enumerate() {
            y.blocks[i][(k, l)] = c[idx] * cr(scales[idx]);
        }
        TwoBoxElement { side, value: rc.to_big(&y, self.level(side)) }
    }

    /// `tr₂`-orthonormal basis of one side.
    pub fn orthonormal_basis(&self, side: Side) -> Vec<TwoBoxElement> {
        self.basis(side).iter().map(|b| TwoBoxElement { side, value: b.clone() }).collect()
    }

    pub fn one(&self, side: Side) -> TwoBoxElement {
        TwoBoxElement { side, value: self.level(side).one() }
    }

    pub fn e1(&self) -> TwoBoxElement {
        TwoBoxElement::plus(self.tower.e1().clone())
    }

    pub fn e2(&self) -> TwoBoxElement {
        TwoBoxElement::minus(self.tower.e2().clone())
    }

    pub fn zero(&self, side: Side) -> TwoBoxElement {
        TwoBoxElement { side, value: self.level(side).zero() }
    }

    /// Projection of an arbitrary element of `M₁` / `M₂` onto the two-box space.
    pub fn project(&self, side: Side, x: &Element) -> TwoBoxElement {
        TwoBoxElement { side, value: self.relative_commutant(side).project(x, self.level(side)) }
    }

    /// Checked constructor: the value must lie in the relative commutant within 1e-10.
    pub fn element(&self, side: Side, x: Element) -> Result<TwoBoxElement, QfaError> {
        let alg = self.level(side);
        if !alg.owns(&x) {
            return Err(QfaError::WrongSide);
        }
        let residual = self.relative_commutant(side).membership_residual(&x, alg);
        if residual > 1e-10 {
            return Err(QfaError::NotInRelativeCommutant { residual });
        }
        Ok(TwoBoxElement { side, value: x })
    }

    /// `tr₂(x) = μ τ(x)`.
    pub fn tr2(&self, x: &TwoBoxElement) -> Complex64 {
        self.level(x.side).trace(&x.value) * cr(self.mu())
    }

    /// `tr₂(x^* x)^{1/2}`.
    pub fn norm2(&self, x: &TwoBoxElement) -> f64 {
        (self.mu()).sqrt() * self.level(x.side).norm2(&x.value)
    }

    /// `tr₂(|x|)`.
    pub fn norm1(&self, x: &TwoBoxElement) -> f64 {
        self.mu() * self.level(x.side).norm1(&x.value)
    }

    pub fn fourier(&self, x: &TwoBoxElement) -> Result<TwoBoxElement, QfaError> {
        if x.side != Side::Plus {
            return Err(QfaError::WrongSide);
        }
        Ok(self.from_coords(Side::Minus, &(&self.f * self.coords(x))))
    }

    pub fn fourier_inv(&self, z: &TwoBoxElement) -> Result<TwoBoxElement, QfaError> {
        if z.side != Side::Minus {
            return Err(QfaError::WrongSide);
        }
        Ok(self.from_coords(Side::Plus, &(&self.finv * self.coords(z))))
    }

    /// Transform used for positivity questions on either side: `F` on `P₊` and the
    /// inverse rotation on `P₋`.
    pub fn transform(&self, x: &TwoBoxElement) -> TwoBoxElement {
        match x.side {
            Side::Plus => self.fourier(x).unwrap(),
            Side::Minus => self.fourier_inv(x).unwrap(),
        }
    }

    /// `x ∗ y = F⁻¹(F(y)F(x))` on `P₊`; on `P₋` convolution is transported multiplication
    /// of `P₊`, `a ∗ b = F(F⁻¹(a)F⁻¹(b))`.
    pub fn convolve(&self, x: &TwoBoxElement, y: &TwoBoxElement) -> Result<TwoBoxElement, QfaError> {
        if x.side != y.side {
            return Err(QfaError::SideMismatch);
        }
        match x.side {
            Side::Plus => {
                let p = self.fourier(y)?.mul(&self.fourier(x)?)?;
                self.fourier_inv(&p)
            }
            Side::Minus => {
                let p = self.fourier_inv(x)?.mul(&self.fourier_inv(y)?)?;
                self.fourier(&p)
            }
        }
    }

    /// Unit for convolution: `δe₁` on `P₊`, `F(1₊)` on `P₋`.
    pub fn convolution_unit(&self, side: Side) -> TwoBoxElement {
        match side {
            Side::Plus => self.e1().scale_re(self.delta),
            Side::Minus => self.fourier(&self.one(Side::Plus)).unwrap(),
        }
    }

    pub fn conv_power(&self, y: &TwoBoxElement, k: usize) -> Result<TwoBoxElement, QfaError> {
        let mut acc = y.clone();
        for _ in 1..k {
            acc = self.convolve(&acc, y)?;
        }
        Ok(acc)
    }

    /// `x̄ = F⁻¹(F(x)^*)` (on `P₋`: `F(F⁻¹(x)^*)`).
    pub fn contragredient(&self, x: &TwoBoxElement) -> TwoBoxElement {
        match x.side {
            Side::Plus => self.fourier_inv(&self.fourier(x).unwrap().adjoint()).unwrap(),
            Side::Minus => self.fourier(&self.fourier_inv(x).unwrap().adjoint()).unwrap(),
        }
    }

    /// The linear 180° rotation `σ(x) = (x̄)^*` of a two-box space.
    pub fn rotate180(&self, x: &TwoBoxElement) -> TwoBoxElement {
        self.contragredient(x).adjoint()
    }

    /// The opposite quarter rotation `P₊ → P₋`, `x ↦ F(σ(x))`. The channel multiplier is
    /// `Φ̂ = μ F(σ(y_Φ))`; it agrees with `μ F(y_Φ)` exactly when `σ(y_Φ) = y_Φ`.
    pub fn fourier_opposite(&self, x: &TwoBoxElement) -> Result<TwoBoxElement, QfaError> {
        if x.side != Side::Plus {
            return Err(QfaError::WrongSide);
        }
        self.fourier(&self.rotate180(x))
    }

    /// Minimum eigenvalue of the transform; `x` is Fourier-positive when this is `≥ -tol`.
    pub fn f_min_eig(&self, x: &TwoBoxElement) -> f64 {
        self.transform(x).value.min_eig()
    }

    pub fn range_projection(&self, x: &TwoBoxElement, tol_rank: f64) -> TwoBoxElement {
        TwoBoxElement { side: x.side, value: algebra_core::range_projection(&x.value, tol_rank) }
    }

    fn projection_residual(x: &TwoBoxElement) -> f64 {
        let v = &x.value;
        (&(v * v) - v).frob().max((v - &v.adjoint()).frob())
    }

    /// A projection `p` is a biprojection when its transform is a positive multiple of a
    /// projection. Returns the verdict and the projection defect of the normalized transform.
    pub fn is_biprojection(&self, p: &TwoBoxElement) -> Result<(bool, f64), QfaError> {
        let residual = Self::projection_residual(p);
        if residual > 1e-9 {
            return Err(QfaError::NotAProjection { residual });
        }
        let fp = self.transform(p);
        let n = fp.norm_inf();
        if n == 0.0 {
            return Ok((false, f64::INFINITY));
        }
        let u = fp.scale_re(1.0 / n);
        let defect = Self::projection_residual(&u);
        let pos = fp.value.min_eig() >= -1e-9;
        Ok((defect < 1e-8 && pos, defect))
    }

    /// Range projection of `Σ_{i≤k} y^{∗i}`, increasing `k` until the rank is stable twice.
    pub fn biprojection_generated(&self, y: &TwoBoxElement) -> Result<(TwoBoxElement, usize), QfaError> {
        let d = self.dim();
        let limit = d * d;
        let mut power = y.clone();
        let mut sum = y.scale_re(1.0 / y.norm_inf().max(1e-300));
        let mut last_rank = None;
        let mut stable = 0;
        for k in 1..=limit {
            if k > 1 {
                power = self.convolve(&power, y)?;
                let n = power.norm_inf();
                if n > 0.0 {
                    power = power.scale_re(1.0 / n);
                }
                sum = sum.add(&power)?;
            }
            let r = self.range_projection(&sum, 1e-10);
            let rank = r.value.blocks.iter().map(|b| b.trace().re.round() as i64).sum::<i64>();
            if Some(rank) == last_rank {
                stable += 1;
                if stable >= 2 {
                    return Ok((r, k));
                }
            } else {
                stable = 0;
            }
            last_rank = Some(rank);
        }
        Err(QfaError::NoStabilization { k: limit })
    }

    /// Whether `q` is a right (`p∗q = (tr₂p/δ) q`) or left (`q∗p = (tr₂p/δ) q`) shift of
    /// the biprojection `p`. Returns the verdict and the convolution residual.
    pub fn shift_check(&self, p: &TwoBoxElement, q: &TwoBoxElement, dir: Direction) -> Result<(bool, f64), QfaError> {
        let (bp, _) = self.is_biprojection(p).map_err(|_| QfaError::NotABiprojection)?;
        if !bp {
            return Err(QfaError::NotABiprojection);
        }
        let rq = Self::projection_residual(q);
        if rq > 1e-9 {
            return Err(QfaError::NotAProjection { residual: rq });
        }
        let tp = self.tr2(p).re;
        let tq = self.tr2(q).re;
        let conv = match dir {
            Direction::Right => self.convolve(p, q)?,
            Direction::Left => self.convolve(q, p)?,
        };
        let res = self.norm2(&conv.sub(&q.scale_re(tp / self.delta))?);
        Ok(((tp - tq).abs() < 1e-8 && res < 1e-8, res))
    }

    /// `S(p∗q) = tr₂ R(p∗q)` with the inequality and equality-case flags.
    pub fn sum_set(&self, p: &TwoBoxElement, q: &TwoBoxElement) -> Result<SumSet, QfaError> {
        for x in [p, q] {
            let r = Self::projection_residual(x);
            if r > 1e-9 {
                return Err(QfaError::NotAProjection { residual: r });
            }
        }
        let pq = self.convolve(p, q)?;
        let s = self.tr2(&self.range_projection(&pq, 1e-10)).re;
        let tp = self.tr2(p).re;
        let tq = self.tr2(q).re;
        let scaled = pq.scale_re(self.delta / tp);
        let eq_defect = Self::projection_residual(&scaled);
        Ok(SumSet { s, lower_bound: tp.max(tq), inequality_holds: tp.max(tq) <= s + 1e-8, equality_case: eq_defect < 1e-8 })
    }

    /// Riesz projection of a two-box element at the eigenvalues selected by `pick`.
    pub fn riesz(&self, x: &TwoBoxElement, pick: impl Fn(Complex64) -> bool + Copy) -> TwoBoxElement {
        let v = x.value.map(|b| linalg::riesz_projection(b, pick));
        TwoBoxElement { side: x.side, value: v }
    }

    /// Frobenius-type decomposition of an F-positive `x ∈ P₊` with `r(x) = 1` and
    /// `tr₂₋(F(x)) = δ`.
    pub fn peripheral_decomposition(&self, x: &TwoBoxElement) -> Result<PeripheralDecomposition, QfaError> {
        if x.side != Side::Plus {
            return Err(QfaError::WrongSide);
        }
        let fx = self.fourier(x)?;
        let fmin = fx.value.min_eig();
        if fmin < -1e-9 || fx.value.dist(&fx.value.adjoint()) > 1e-9 * fx.norm_inf().max(1.0) {
            return Err(QfaError::NotFPositive { min_eig: fmin });
        }
        let evs = x.value.eigenvalues();
        let r = evs.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if (r - 1.0).abs() >= 1e-8 {
            return Err(QfaError::NotNormalized(format!("spectral radius {r}")));
        }
        let tfx = self.tr2(&fx).re;
        if (tfx - self.delta).abs() >= 1e-8 {
            return Err(QfaError::NotNormalized(format!("tr2(F(x)) = {tfx}, expected {}", self.delta)));
        }
        let mut res = BTreeMap::new();
        let mut checks = BTreeMap::new();
        // (a)
        let na = (x.norm_inf() - 1.0).abs();
        res.insert("a_norm".to_string(), na);
        checks.insert("a_norm".to_string(), na < 1e-8);
        // (b)
        let peripheral: Vec<Complex64> = evs.iter().cloned().filter(|z| (z.norm() - 1.0).abs() < 1e-7).collect();
        let m = fit_roots_of_unity(&peripheral, self.dim())?;
        let lambdas: Vec<Complex64> = (0..m).map(|j| algebra_core::root_of_unity(j as i64, m)).collect();
        let qs: Vec<TwoBoxElement> = lambdas
            .iter()
            .map(|&l| {
                let q = self.riesz(x, move |z| (z - l).norm() < 1e-7);
                self.project(Side::Plus, &q.value)
            })
            .collect();
        let mut eig_res: f64 = 0.0;
        for (q, l) in qs.iter().zip(&lambdas) {
            eig_res = eig_res.max((&x.value * &q.value).dist(&q.value.scale(*l)));
            eig_res = eig_res.max((&q.value * &x.value).dist(&q.value.scale(*l)));
            eig_res = eig_res.max(Self::projection_residual(q));
        }
        res.insert("b_eigen_relations".to_string(), eig_res);
        checks.insert("b_eigen_relations".to_string(), eig_res < 1e-7);
        // (c)
        let ces = cesaro_mean(&x.value, 1000);
        let c_res = (&ces - &qs[0].value).norm_inf();
        res.insert("c_cesaro_n1000".to_string(), c_res);
        checks.insert("c_cesaro_n1000".to_string(), c_res < 1e-6);
        // exact finite-n picture for diagonalizable x: C_n − Q = Σ_{λ≠1} λ(1−λ^n)/(n(1−λ)) P_λ
        let n = 1000.0;
        let mut rate_bound = 0.0;
        for g in linalg::cluster(&evs, 1e-7) {
            let l = evs[g[0]];
            if (l - cr(1.0)).norm() < 1e-7 || l.norm() < 1e-12 {
                continue;
            }
            let pl = self.riesz(x, move |z| (z - l).norm() < 1e-7);
            let coef = (l * (cr(1.0) - l.powf(n)) / ((cr(1.0) - l) * cr(n))).norm();
            rate_bound += coef * pl.norm_inf();
        }
        let rate_bound = rate_bound * (1.0 + 1e-6) + 1e-12;
        res.insert("c_cesaro_rate_bound".to_string(), rate_bound);
        checks.insert("c_cesaro_within_rate".to_string(), c_res <= rate_bound);
        let (b1, d1) = self.is_biprojection(&qs[0])?;
        res.insert("c_q1_biprojection".to_string(), d1);
        checks.insert("c_q1_biprojection".to_string(), b1);
        // (d)
        let mut shift_res: f64 = 0.0;
        let mut shift_ok = b1;
        if b1 {
            for q in &qs {
                let (ok, r) = self.shift_check(&qs[0], q, Direction::Right)?;
                shift_ok &= ok;
                shift_res = shift_res.max(r);
            }
        }
        res.insert("d_right_shifts".to_string(), shift_res);
        checks.insert("d_right_shifts".to_string(), shift_ok);
        // (e)
        let mut sum = self.zero(Side::Plus);
        for q in &qs {
            sum = sum.add(q)?;
        }
        let (bs, ds) = self.is_biprojection(&sum)?;
        let xxs = x.mul(&x.adjoint())?;
        let rx = self.riesz(&xxs, |z| (z - cr(1.0)).norm() < 1e-7);
        let e_res = sum.value.dist(&rx.value);
        res.insert("e_sum_biprojection".to_string(), ds);
        res.insert("e_sum_vs_riesz_xxstar".to_string(), e_res);
        checks.insert("e_sum_biprojection".to_string(), bs);
        checks.insert("e_sum_vs_riesz_xxstar".to_string(), e_res < 1e-7);
        // (f)
        let t1 = self.tr2(&qs[0]).re;
        let mut g_res: f64 = 0.0;
        for k in 0..m {
            for j in 0..m {
                let c = self.convolve(&qs[k], &qs[j])?.scale_re(self.delta / t1);
                g_res = g_res.max(c.value.dist(&qs[(k + j) % m].value));
            }
        }
        res.insert("f_group_law".to_string(), g_res);
        checks.insert("f_group_law".to_string(), g_res < 1e-7);
        Ok(PeripheralDecomposition { eigenvalues: lambdas, projections: qs, m, residuals: res, checks })
    }

    /// Relation between the biprojections generated by `y` and by `y ∗ ȳ`.
    pub fn two_biprojection_check(&self, y: &TwoBoxElement) -> Result<TwoBiprojectionReport, QfaError> {
        if y.min_eig() < -1e-10 * y.norm_inf().max(1.0) {
            return Err(QfaError::PreconditionFailed("y is not positive".into()));
        }
        let (q, _) = self.biprojection_generated(y)?;
        let yb = self.contragredient(y);
        let (p, _) = self.biprojection_generated(&self.convolve(y, &yb)?)?;
        let (p_rev, _) = self.biprojection_generated(&self.convolve(&yb, y)?)?;
        let orders_agree = p.value.dist(&p_rev.value) < 1e-7;
        let tp = self.tr2(&p).re;
        let tq = self.tr2(&q).re;
        let ratio = tq / tp;
        let m = ratio.round().max(1.0) as usize;
        let mut residuals = BTreeMap::new();
        residuals.insert("trace_ratio_integrality".to_string(), (ratio - m as f64).abs());
        // cosets: p_j = R(y^{∗j} ∗ p), j = 1..m, with p_m = p
        let mut shifts = Vec::with_capacity(m);
        let mut power = y.clone();
        for j in 1..=m {
            if j > 1 {
                power = self.convolve(&power, y)?;
                power = power.scale_re(1.0 / power.norm_inf().max(1e-300));
            }
            let pj = self.range_projection(&self.convolve(&power, &p)?, 1e-10);
            shifts.push(pj);
        }
        shifts.rotate_right(1);
        let mut total = self.zero(y.side);
        for pj in &shifts {
            total = total.add(pj)?;
        }
        let sum_res = total.value.dist(&q.value);
        residuals.insert("q_equals_sum".to_string(), sum_res);
        let mut shift_res: f64 = 0.0;
        let mut all_shifts = true;
        for pj in &shifts {
            let (ok_r, rr) = self.shift_check(&p, pj, Direction::Right)?;
            let (ok_l, rl) = self.shift_check(&p, pj, Direction::Left)?;
            all_shifts &= ok_r || ok_l;
            shift_res = shift_res.max(rr.min(rl));
        }
        residuals.insert("shift_law".to_string(), shift_res);
        let mut closure: f64 = 0.0;
        for a in 0..m {
            for b in 0..m {
                let c = self.convolve(&shifts[a], &shifts[b])?.scale_re(self.delta / tp);
                closure = closure.max(c.value.dist(&shifts[(a + b) % m].value));
            }
        }
        residuals.insert("cyclic_closure".to_string(), closure);
        let ok = sum_res < 1e-7 && closure < 1e-7 && shift_res < 1e-7 && all_shifts;
        Ok(TwoBiprojectionReport { q, p, p_reversed_order: p_rev, orders_agree, shifts, m, residuals, passed: ok })
    }

    /// `‖(zy)∗x̂ − α(z∗x̂)y‖₂` where `α` is read off from `y∗x̂ = αy`.
    pub fn split_lemma_check(&self, x: &TwoBoxElement, y: &TwoBoxElement, z: &TwoBoxElement) -> Result<SplitLemma, QfaError> {
        if y.side != Side::Minus || z.side != Side::Minus || x.side != Side::Plus {
            return Err(QfaError::WrongSide);
        }
        let xh = self.fourier(x)?;
        let ny = self.norm2(y);
        if ny == 0.0 {
            return Ok(SplitLemma { alpha: cr(1.0), residual: 0.0, bound: 0.0, passed: true });
        }
        let yx = self.convolve(y, &xh)?;
        let mu = self.mu();
        let alpha = self.tower.m2().inner(&y.value, &yx.value) * cr(mu) / cr(ny * ny);
        let eig_res = self.norm2(&yx.sub(&y.scale(alpha))?) / ny;
        if (alpha.norm() - 1.0).abs() > 1e-8 || eig_res > 1e-8 {
            return Err(QfaError::PreconditionFailed(format!(
                "y * x^ = alpha y fails: |alpha| = {}, residual {eig_res:e}",
                alpha.norm()
            )));
        }
        let lhs = self.convolve(&z.mul(y)?, &xh)?;
        let rhs = self.convolve(z, &xh)?.mul(y)?.scale(alpha);
        let residual = self.norm2(&lhs.sub(&rhs)?);
        let bound = 1e-7 * self.norm2(z).max(1e-300) * ny;
        Ok(SplitLemma { alpha, residual, bound, passed: residual < bound.max(1e-12) })
    }
}

/// Truncated Cesàro mean `(1/n) Σ_{k=1}^n x^k`.
pub fn cesaro_mean(x: &Element, n: usize) -> Element {
    x.map(|b| {
        let mut acc = linalg::zeros(b.nrows(), b.ncols());
        let mut p = linalg::eye(b.nrows());
        for _ in 0..n {
            p = &p * b;
            acc += &p;
        }
        acc / cr(n as f64)
    })
}

/// Smallest `m ≤ max_m` such that every point is within 1e-7 of an m-th root of unity and
/// the detected set is exactly the group of m-th roots.
pub fn fit_roots_of_unity(points: &[Complex64], max_m: usize) -> Result<usize, QfaError> {
    let reps: Vec<Complex64> = linalg::cluster(points, 1e-7).iter().map(|g| points[g[0]]).collect();
    for m in 1..=max_m.max(1) {
        let fits = reps.iter().all(|z| {
            let k = (z.arg() * m as f64 / (2.0 * std::f64::consts::PI)).round() as i64;
            (z - algebra_core::root_of_unity(k, m)).norm() < 1e-7
        });
        if fits {
            let all_present = (0..m).all(|k| {
                let w = algebra_core::root_of_unity(k as i64, m);
                reps.iter().any(|z| (z - w).norm() < 1e-7)
            });
            if all_present && reps.len() == m {
                return Ok(m);
            }
            return Err(QfaError::GroupFitFailed { max_m });
        }
    }
    Err(QfaError::GroupFitFailed { max_m })
}

#[derive(Debug, Clone, Serialize)]
pub struct SumSet {
    pub s: f64,
    pub lower_bound: f64,
    pub inequality_holds: bool,
    pub equality_case: bool,
}

#[derive(Debug, Clone)]
pub struct PeripheralDecomposition {
    pub eigenvalues: Vec<Complex64>,
    pub projections: Vec<TwoBoxElement>,
    pub m: usize,
    pub residuals: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, bool>,
}

impl PeripheralDecomposition {
    pub fn all_passed(&self) -> bool {
        self.checks.values().all(|&b| b)
    }
}

#[derive(Debug, Clone)]
pub struct TwoBiprojectionReport {
    pub q: TwoBoxElement,
    pub p: TwoBoxElement,
    pub p_reversed_order: TwoBoxElement,
    pub orders_agree: bool,
    pub shifts: Vec<TwoBoxElement>,
    pub m: usize,
    pub residuals: BTreeMap<String, f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitLemma {
    pub alpha: Complex64,
    pub residual: f64,
    pub bound: f64,
    pub passed: bool,
}

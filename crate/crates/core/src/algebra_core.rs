//! Finite-dimensional multi-matrix algebras `⊕ M_{n_i}` with a faithful tracial state,
//! their elements, the GNS space `L²(A, τ)`, commutants and centers.

use crate::linalg::{self, c, cr, CMat, CVec, ONE, ZERO};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("trace weights give tau(1) = {sum}, expected 1")]
    NonNormalizedTrace { sum: f64 },
    #[error("algebra has no blocks")]
    EmptyAlgebra,
    #[error("invalid block: {0}")]
    InvalidBlock(String),
    #[error("element does not belong to this algebra")]
    OwnerMismatch,
    #[error("element is not normal (defect {defect:e})")]
    NotNormal { defect: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("span is not a *-algebra (residual {residual:e})")]
    NotAnAlgebra { residual: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub label: String,
    pub size: usize,
}

/// `⊕_i M_{n_i}` with trace `τ(x) = Σ_i w_i Tr(x_i)`, so `w_i` is the trace of a minimal
/// projection in block `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiMatrixAlgebra {
    blocks: Vec<Block>,
    weights: Vec<f64>,
}

impl MultiMatrixAlgebra {
    pub fn new(blocks: Vec<Block>, weights: Vec<f64>) -> Result<Self, AlgebraError> {
        if blocks.is_empty() {
            return Err(AlgebraError::EmptyAlgebra);
        }
        if weights.len() != blocks.len() {
            return Err(AlgebraError::InvalidBlock(format!(
                "{} weights for {} blocks",
                weights.len(),
                blocks.len()
            )));
        }
        for (b, w) in blocks.iter().zip(&weights) {
            if b.size == 0 {
                return Err(AlgebraError::InvalidBlock(format!("block '{}' has size 0", b.label)));
            }
            if !(*w > 0.0) || !w.is_finite() {
                return Err(AlgebraError::InvalidBlock(format!("block '{}' has weight {w}", b.label)));
            }
        }
        let sum: f64 = blocks.iter().zip(&weights).map(|(b, w)| w * b.size as f64).sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(AlgebraError::NonNormalizedTrace { sum });
        }
        Ok(Self { blocks, weights })
    }

    /// Blocks with auto-generated labels `b0, b1, ...`.
    pub fn from_sizes(sizes: &[usize], weights: Vec<f64>) -> Result<Self, AlgebraError> {
        let blocks = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| Block { label: format!("b{i}"), size: n })
            .collect();
        Self::new(blocks, weights)
    }

    /// `M_n` with its normalized trace.
    pub fn full(n: usize) -> Self {
        Self::from_sizes(&[n], vec![1.0 / n as f64]).expect("full matrix algebra")
    }

    /// `C^n` (diagonal matrices) with the uniform trace.
    pub fn diagonal(n: usize) -> Self {
        Self::from_sizes(&vec![1; n], vec![1.0 / n as f64; n]).expect("diagonal algebra")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.size).collect()
    }
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }
    /// Complex dimension `Σ n_i²`.
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.size * b.size).sum()
    }
    pub fn is_factor(&self) -> bool {
        self.blocks.len() == 1
    }

    pub fn owns(&self, x: &Element) -> bool {
        x.blocks.len() == self.blocks.len()
            && x.blocks.iter().zip(&self.blocks).all(|(m, b)| m.nrows() == b.size && m.ncols() == b.size)
    }

    pub fn check(&self, x: &Element) -> Result<(), AlgebraError> {
        if self.owns(x) {
            Ok(())
        } else {
            Err(AlgebraError::OwnerMismatch)
        }
    }

    pub fn zero(&self) -> Element {
        Element { blocks: self.blocks.iter().map(|b| linalg::zeros(b.size, b.size)).collect() }
    }

    pub fn one(&self) -> Element {
        Element { blocks: self.blocks.iter().map(|b| linalg::eye(b.size)).collect() }
    }

    /// Matrix unit `e^{(i)}_{kl}`.
    pub fn unit(&self, i: usize, k: usize, l: usize) -> Element {
        let mut x = self.zero();
        x.blocks[i][(k, l)] = ONE;
        x
    }

    /// Central projection onto block `i`.
    pub fn block_unit(&self, i: usize) -> Element {
        let mut x = self.zero();
        x.blocks[i] = linalg::eye(self.blocks[i].size);
        x
    }

    /// All matrix units, block-major then row-major; this is also the GNS basis order.
    pub fn units(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.dim());
        for (i, b) in self.blocks.iter().enumerate() {
            for k in 0..b.size {
                for l in 0..b.size {
                    out.push((i, k, l));
                }
            }
        }
        out
    }

    pub fn from_blocks(&self, blocks: Vec<CMat>) -> Result<Element, AlgebraError> {
        let x = Element { blocks };
        self.check(&x)?;
        Ok(x)
    }

    pub fn trace(&self, x: &Element) -> Complex64 {
        x.blocks.iter().zip(&self.weights).map(|(m, w)| m.trace() * cr(*w)).sum()
    }

    pub fn try_trace(&self, x: &Element) -> Result<Complex64, AlgebraError> {
        self.check(x)?;
        Ok(self.trace(x))
    }

    /// `τ(x^* y)`.
    pub fn inner(&self, x: &Element, y: &Element) -> Complex64 {
        x.blocks
            .iter()
            .zip(&y.blocks)
            .zip(&self.weights)
            .map(|((a, b), w)| linalg::hs_inner(a, b) * cr(*w))
            .sum()
    }

    /// `‖x‖₂ = τ(x^*x)^{1/2}`.
    pub fn norm2(&self, x: &Element) -> f64 {
        self.inner(x, x).re.max(0.0).sqrt()
    }

    /// `‖x‖₁ = τ(|x|)`.
    pub fn norm1(&self, x: &Element) -> f64 {
        x.blocks
            .iter()
            .zip(&self.weights)
            .map(|(m, w)| w * linalg::singular_values(m).iter().sum::<f64>())
            .sum()
    }

    /// Operator norm (largest singular value over all blocks).
    pub fn norm_inf(&self, x: &Element) -> f64 {
        x.norm_inf()
    }

    /// Projection onto the range of `x`, singular values below `tol_rank · σ_max` discarded.
    pub fn range_projection(&self, x: &Element, tol_rank: f64) -> Result<Element, AlgebraError> {
        self.check(x)?;
        Ok(range_projection(x, tol_rank))
    }

    /// Polar decomposition `x = v|x|` with `v` a partial isometry.
    pub fn polar(&self, x: &Element) -> Result<(Element, Element), AlgebraError> {
        self.check(x)?;
        Ok(polar(x))
    }

    /// Spectral decomposition of a normal element: distinct eigenvalues with their projections.
    pub fn spectral(&self, x: &Element) -> Result<Vec<(Complex64, Element)>, AlgebraError> {
        self.check(x)?;
        spectral(self, x)
    }
}

/// Element of a multi-matrix algebra stored block by block.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub blocks: Vec<CMat>,
}

impl Element {
    pub fn adjoint(&self) -> Element {
        Element { blocks: self.blocks.iter().map(|m| m.adjoint()).collect() }
    }

    pub fn scale(&self, s: Complex64) -> Element {
        Element { blocks: self.blocks.iter().map(|m| m * s).collect() }
    }

    pub fn scale_re(&self, s: f64) -> Element {
        self.scale(cr(s))
    }

    pub fn axpy(&mut self, s: Complex64, other: &Element) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            *a += b * s;
        }
    }

    pub fn same_shape(&self, other: &Element) -> bool {
        self.blocks.len() == other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| a.shape() == b.shape())
    }

    pub fn checked_add(&self, other: &Element) -> Result<Element, AlgebraError> {
        if !self.same_shape(other) {
            return Err(AlgebraError::OwnerMismatch);
        }
        Ok(self + other)
    }

    pub fn checked_mul(&self, other: &Element) -> Result<Element, AlgebraError> {
        if !self.same_shape(other) {
            return Err(AlgebraError::OwnerMismatch);
        }
        Ok(self * other)
    }

    /// Frobenius norm of the block data (unweighted).
    pub fn frob(&self) -> f64 {
        self.blocks.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.blocks.iter().map(linalg::op_norm).fold(0.0, f64::max)
    }

    pub fn hermitian_part(&self) -> Element {
        Element { blocks: self.blocks.iter().map(linalg::hermitian_part).collect() }
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eig(&self) -> f64 {
        self.blocks.iter().map(linalg::min_herm_eig).fold(f64::INFINITY, f64::min)
    }

    pub fn max_eig(&self) -> f64 {
        self.blocks
            .iter()
            .map(|m| linalg::herm_eig(m).0.last().cloned().unwrap_or(f64::NEG_INFINITY))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Real function of the Hermitian part.
    pub fn herm_func(&self, f: impl Fn(f64) -> f64 + Copy) -> Element {
        Element { blocks: self.blocks.iter().map(|m| linalg::herm_func(m, f)).collect() }
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.blocks.iter().flat_map(linalg::eigenvalues).collect()
    }

    pub fn map(&self, f: impl Fn(&CMat) -> CMat) -> Element {
        Element { blocks: self.blocks.iter().map(f).collect() }
    }

    pub fn dist(&self, other: &Element) -> f64 {
        (self - other).frob()
    }

    pub fn is_projection(&self, tol: f64) -> bool {
        (&(self * self) - self).frob() <= tol && (self - &self.adjoint()).frob() <= tol
    }
}

impl<'a> Add<&'a Element> for &'a Element {
    type Output = Element;
    fn add(self, o: &Element) -> Element {
        assert!(self.same_shape(o), "element shape mismatch");
        Element { blocks: self.blocks.iter().zip(&o.blocks).map(|(a, b)| a + b).collect() }
    }
}

impl<'a> Sub<&'a Element> for &'a Element {
    type Output = Element;
    fn sub(self, o: &Element) -> Element {
        assert!(self.same_shape(o), "element shape mismatch");
        Element { blocks: self.blocks.iter().zip(&o.blocks).map(|(a, b)| a - b).collect() }
    }
}

impl<'a> Mul<&'a Element> for &'a Element {
    type Output = Element;
    fn mul(self, o: &Element) -> Element {
        assert!(self.same_shape(o), "element shape mismatch");
        Element { blocks: self.blocks.iter().zip(&o.blocks).map(|(a, b)| linalg::mm(a, b)).collect() }
    }
}

impl Add for Element {
    type Output = Element;
    fn add(self, o: Element) -> Element {
        &self + &o
    }
}

impl Sub for Element {
    type Output = Element;
    fn sub(self, o: Element) -> Element {
        &self - &o
    }
}

impl Mul for Element {
    type Output = Element;
    fn mul(self, o: Element) -> Element {
        &self * &o
    }
}

pub fn range_projection(x: &Element, tol_rank: f64) -> Element {
    let smax = x.norm_inf();
    x.map(|m| {
        if smax == 0.0 {
            return linalg::zeros(m.nrows(), m.ncols());
        }
        // cut relative to the global σ_max, not the block's
        let svd = m.clone().svd(true, false);
        let u = svd.u.unwrap();
        let mut p = linalg::zeros(m.nrows(), m.nrows());
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s > tol_rank * smax {
                let col = u.column(i);
                p += &col * col.adjoint();
            }
        }
        round_projection(&p)
    })
}

/// Re-symmetrize and snap the spectrum of an approximate projection to {0, 1}.
pub fn round_projection(p: &CMat) -> CMat {
    linalg::herm_func(p, |v| if v > 0.5 { 1.0 } else { 0.0 })
}

pub fn polar(x: &Element) -> (Element, Element) {
    let smax = x.norm_inf();
    let mut vs = Vec::new();
    let mut ab = Vec::new();
    for m in &x.blocks {
        let n = m.nrows();
        if n == 0 {
            vs.push(m.clone());
            ab.push(m.clone());
            continue;
        }
        let svd = m.clone().svd(true, true);
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let mut v = linalg::zeros(n, n);
        let mut a = linalg::zeros(n, n);
        for (i, s) in svd.singular_values.iter().enumerate() {
            let ui = u.column(i);
            let vi = vt.row(i).adjoint();
            a += &vi * vi.adjoint() * cr(*s);
            if *s > 1e-14 * smax.max(1e-300) {
                v += &ui * vi.adjoint();
            }
        }
        vs.push(v);
        ab.push(a);
    }
    (Element { blocks: vs }, Element { blocks: ab })
}

fn spectral(alg: &MultiMatrixAlgebra, x: &Element) -> Result<Vec<(Complex64, Element)>, AlgebraError> {
    let defect = (&(&x.adjoint() * x) - &(x * &x.adjoint())).norm_inf();
    if defect >= 1e-10 * x.norm_inf().max(1.0) {
        return Err(AlgebraError::NotNormal { defect });
    }
    let mut pairs: Vec<(Complex64, Element)> = Vec::new();
    for (bi, m) in x.blocks.iter().enumerate() {
        let (q, t) = linalg::schur(m);
        let n = m.nrows();
        let evs: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
        for g in linalg::cluster(&evs, 1e-9) {
            let lam = g.iter().map(|&i| evs[i]).sum::<Complex64>() / cr(g.len() as f64);
            let mut p = linalg::zeros(n, n);
            for &i in &g {
                let col = q.column(i);
                p += &col * col.adjoint();
            }
            let p = round_projection(&p);
            match pairs.iter_mut().find(|(l, _)| (*l - lam).norm() <= 1e-9) {
                Some((_, e)) => e.blocks[bi] += p,
                None => {
                    let mut e = alg.zero();
                    e.blocks[bi] = p;
                    pairs.push((lam, e));
                }
            }
        }
    }
    pairs.sort_by(|a, b| (a.0.re, a.0.im).partial_cmp(&(b.0.re, b.0.im)).unwrap());
    Ok(pairs)
}

fn vec_col(m: &CMat) -> CVec {
    CVec::from_iterator(m.len(), m.iter().cloned())
}

fn unvec_col(v: &CVec, d: usize) -> CMat {
    CMat::from_iterator(d, d, v.iter().cloned())
}

/// Commutant of the *-algebra generated by `gens` inside `M_d`, returned as a
/// Hilbert–Schmidt orthonormal basis. Computed as the SVD nullspace of the stacked
/// commutator maps; intended for moderate `d`.
pub fn commutant(gens: &[CMat], d: usize) -> Result<Vec<CMat>, AlgebraError> {
    for g in gens {
        if g.nrows() != d || g.ncols() != d {
            return Err(AlgebraError::DimensionMismatch(format!(
                "generator is {}x{}, expected {d}x{d}",
                g.nrows(),
                g.ncols()
            )));
        }
    }
    let mut all: Vec<CMat> = Vec::new();
    for g in gens {
        all.push(g.clone());
        if linalg::hermiticity_defect(g) > 1e-14 * g.norm().max(1.0) {
            all.push(g.adjoint());
        }
    }
    if all.is_empty() {
        let mut out = Vec::new();
        for j in 0..d {
            for i in 0..d {
                let mut m = linalg::zeros(d, d);
                m[(i, j)] = ONE;
                out.push(m);
            }
        }
        return Ok(out);
    }
    let id = linalg::eye(d);
    let d2 = d * d;
    let mut stacked = linalg::zeros(all.len() * d2, d2);
    for (k, g) in all.iter().enumerate() {
        // vec(GX - XG) = (I ⊗ G - Gᵀ ⊗ I) vec(X), column-major vec
        let blk = linalg::kron(&id, g) - linalg::kron(&g.transpose(), &id);
        stacked.view_mut((k * d2, 0), (d2, d2)).copy_from(&blk);
    }
    let scale = all.iter().map(|g| g.norm()).fold(1.0, f64::max);
    let ns = linalg::nullspace(&(stacked / cr(scale)), 1e-10);
    Ok((0..ns.ncols()).map(|j| unvec_col(&ns.column(j).into_owned(), d)).collect())
}

/// Center of the algebra spanned by `basis`, and whether that algebra is a factor.
pub fn center_and_factor(basis: &[CMat]) -> Result<(Vec<CMat>, bool), AlgebraError> {
    if basis.is_empty() {
        return Err(AlgebraError::EmptyAlgebra);
    }
    let d = basis[0].nrows();
    if basis.iter().any(|b| b.nrows() != d || b.ncols() != d) {
        return Err(AlgebraError::DimensionMismatch("basis elements differ in size".into()));
    }
    let mut span = linalg::zeros(d * d, basis.len());
    for (j, b) in basis.iter().enumerate() {
        span.set_column(j, &vec_col(b));
    }
    let q = linalg::orthonormalize(&span, 1e-10);
    let scale = basis.iter().map(|b| b.norm()).fold(1.0, f64::max);
    let mut residual: f64 = 0.0;
    let mut out_of_span = |m: &CMat| {
        let v = vec_col(m);
        let r = &v - &q * (q.adjoint() * &v);
        residual = residual.max(r.norm() / (scale * scale));
    };
    for a in basis {
        out_of_span(&a.adjoint());
        for b in basis {
            out_of_span(&(a * b));
        }
    }
    if residual > 1e-8 {
        return Err(AlgebraError::NotAnAlgebra { residual });
    }
    // z = Σ c_i q_i commutes with every basis element
    let k = q.ncols();
    let qs: Vec<CMat> = (0..k).map(|j| unvec_col(&q.column(j).into_owned(), d)).collect();
    let mut sys = linalg::zeros(d * d * basis.len(), k);
    for (bj, b) in basis.iter().enumerate() {
        for (i, qi) in qs.iter().enumerate() {
            let comm = qi * b - b * qi;
            sys.view_mut((bj * d * d, i), (d * d, 1)).copy_from(&vec_col(&comm));
        }
    }
    let ns = linalg::nullspace(&(sys / cr(scale)), 1e-10);
    let center: Vec<CMat> = (0..ns.ncols())
        .map(|j| {
            let mut z = linalg::zeros(d, d);
            for i in 0..k {
                z += &qs[i] * ns[(i, j)];
            }
            z
        })
        .collect();
    let factor = center.len() == 1;
    Ok((center, factor))
}

/// The GNS space `L²(A, τ)` in the orthonormal basis `{ e^{(i)}_{kl} / √w_i }`.
#[derive(Debug, Clone)]
pub struct Gns {
    sizes: Vec<usize>,
    sqrt_w: Vec<f64>,
    offsets: Vec<usize>,
    dim: usize,
}

impl Gns {
    pub fn new(alg: &MultiMatrixAlgebra) -> Self {
        let sizes = alg.sizes();
        let mut offsets = Vec::new();
        let mut acc = 0;
        for n in &sizes {
            offsets.push(acc);
            acc += n * n;
        }
        Gns { sqrt_w: alg.weights().iter().map(|w| w.sqrt()).collect(), sizes, offsets, dim: acc }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn index(&self, i: usize, k: usize, l: usize) -> usize {
        self.offsets[i] + k * self.sizes[i] + l
    }

    /// Coordinates of `xΩ`.
    pub fn vec(&self, x: &Element) -> CVec {
        let mut v = CVec::zeros(self.dim);
        for (i, m) in x.blocks.iter().enumerate() {
            let n = self.sizes[i];
            for k in 0..n {
                for l in 0..n {
                    v[self.index(i, k, l)] = m[(k, l)] * cr(self.sqrt_w[i]);
                }
            }
        }
        v
    }

    pub fn unvec(&self, v: &CVec) -> Element {
        let blocks = self
            .sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                CMat::from_fn(n, n, |k, l| v[self.index(i, k, l)] / cr(self.sqrt_w[i]))
            })
            .collect();
        Element { blocks }
    }

    /// `L(x)·W` column by column, without forming `L(x)`.
    pub fn left_apply(&self, x: &Element, w: &CMat) -> CMat {
        let mut out = linalg::zeros(self.dim, w.ncols());
        for j in 0..w.ncols() {
            let col = self.vec(&(x * &self.unvec(&w.column(j).into_owned())));
            out.set_column(j, &col);
        }
        out
    }

    /// Left multiplication `ξ ↦ xξ`.
    pub fn left(&self, x: &Element) -> CMat {
        let mut out = linalg::zeros(self.dim, self.dim);
        for (i, m) in x.blocks.iter().enumerate() {
            let n = self.sizes[i];
            for cc in 0..n {
                for a in 0..n {
                    let s = m[(cc, a)];
                    if s == ZERO {
                        continue;
                    }
                    for b in 0..n {
                        out[(self.index(i, cc, b), self.index(i, a, b))] = s;
                    }
                }
            }
        }
        out
    }

    /// Right multiplication `ξ ↦ ξx`.
    pub fn right(&self, x: &Element) -> CMat {
        let mut out = linalg::zeros(self.dim, self.dim);
        for (i, m) in x.blocks.iter().enumerate() {
            let n = self.sizes[i];
            for cc in 0..n {
                for b in 0..n {
                    let s = m[(cc, b)];
                    if s == ZERO {
                        continue;
                    }
                    for a in 0..n {
                        out[(self.index(i, a, b), self.index(i, a, cc))] = s;
                    }
                }
            }
        }
        out
    }

    /// Index permutation underlying the modular conjugation: `(Jξ)_k = conj(ξ_{π(k)})`.
    pub fn j_permutation(&self) -> Vec<usize> {
        let mut p = vec![0; self.dim];
        for (i, &n) in self.sizes.iter().enumerate() {
            for k in 0..n {
                for l in 0..n {
                    p[self.index(i, k, l)] = self.index(i, l, k);
                }
            }
        }
        p
    }

    /// `J ξ` for the antilinear `J(xΩ) = x^*Ω`.
    pub fn apply_j(&self, v: &CVec) -> CVec {
        let p = self.j_permutation();
        CVec::from_fn(self.dim, |k, _| v[p[k]].conj())
    }

    /// `J T J` for a linear operator `T`; the result is linear.
    pub fn conjugate_by_j(&self, t: &CMat) -> CMat {
        let p = self.j_permutation();
        CMat::from_fn(self.dim, self.dim, |a, b| t[(p[a], p[b])].conj())
    }
}

/// A finite-dimensional *-algebra acting on `C^d`, decomposed from its matrix units:
/// `C^d = ⊕_i C^{a_i} ⊗ C^{m_i}` with the algebra acting as `I ⊗ M_{m_i}` and its
/// commutant as `M_{a_i} ⊗ I`. Column `α·m_i + k` of `w[i]` is the basis vector `(α, k)`.
#[derive(Debug, Clone)]
pub struct IsotypicDecomposition {
    pub dim: usize,
    pub w: Vec<CMat>,
    /// Commutant block sizes `a_i`.
    pub outer: Vec<usize>,
    /// Algebra block sizes `m_i`.
    pub inner: Vec<usize>,
}

impl IsotypicDecomposition {
    /// `f_k0[i][k]` must be the image of the matrix unit `e^{(i)}_{k0}` (so `f_k0[i][0]` is the
    /// minimal projection `e^{(i)}_{00}`). Blocks acting as zero are dropped.
    pub fn from_matrix_units(f_k0: &[Vec<CMat>], dim: usize) -> Self {
        let minimal: Vec<CMat> = f_k0.iter().map(|fs| fs[0].clone()).collect();
        let sizes: Vec<usize> = f_k0.iter().map(Vec::len).collect();
        Self::from_unit_action(&minimal, &sizes, dim, |i, k, v| &f_k0[i][k] * v)
    }

    /// As [`Self::from_matrix_units`], with `minimal[i]` the image of `e^{(i)}_{00}` and
    /// `apply(i, k, v)` computing the image of `e^{(i)}_{k0}` applied to `v`.
    pub fn from_unit_action(
        minimal: &[CMat],
        sizes: &[usize],
        dim: usize,
        apply: impl Fn(usize, usize, &CVec) -> CVec,
    ) -> Self {
        let mut w = Vec::new();
        let mut outer = Vec::new();
        let mut inner = Vec::new();
        for (i, p) in minimal.iter().enumerate() {
            let range = linalg::projection_range(p);
            let a = range.ncols();
            if a == 0 {
                continue;
            }
            let m = sizes[i];
            let mut wi = linalg::zeros(dim, a * m);
            for al in 0..a {
                let v = range.column(al).into_owned();
                wi.set_column(al * m, &v);
                for k in 1..m {
                    wi.set_column(al * m + k, &apply(i, k, &v));
                }
            }
            w.push(wi);
            outer.push(a);
            inner.push(m);
        }
        IsotypicDecomposition { dim, w, outer, inner }
    }

    /// Commutant element with blocks `y_i ∈ M_{a_i}` as an operator on `C^d`.
    pub fn commutant_operator(&self, y: &Element) -> CMat {
        let mut out = linalg::zeros(self.dim, self.dim);
        for (i, wi) in self.w.iter().enumerate() {
            let big = linalg::kron(&y.blocks[i], &linalg::eye(self.inner[i]));
            out += linalg::mm(&linalg::mm(wi, &big), &wi.adjoint());
        }
        out
    }

    /// Commutant coordinates of an operator: `y_i[α,β] = (1/m_i) Σ_k ⟨w_{αk}, T w_{βk}⟩`.
    /// Also returns the residual `‖T - π(y)‖_F` measuring how far `T` is from the commutant.
    pub fn commutant_coords(&self, t: &CMat) -> (Element, f64) {
        let tw: Vec<CMat> = self.w.iter().map(|wi| linalg::mm(t, wi)).collect();
        self.commutant_coords_applied(&tw)
    }

    /// As [`Self::commutant_coords`], given `tw[i] = T·w[i]`; the cost stays linear in `dim`
    /// per column, so `T` itself never has to be formed.
    pub fn commutant_coords_applied(&self, tw: &[CMat]) -> (Element, f64) {
        let mut blocks = Vec::new();
        let mut res2 = 0.0;
        for (i, wi) in self.w.iter().enumerate() {
            let (a, m) = (self.outer[i], self.inner[i]);
            let ti = &tw[i];
            let mut y = linalg::zeros(a, a);
            for al in 0..a {
                for be in 0..a {
                    let mut s = ZERO;
                    for k in 0..m {
                        s += wi.column(al * m + k).dotc(&ti.column(be * m + k));
                    }
                    y[(al, be)] = s / cr(m as f64);
                }
            }
            // ‖T − π(y)‖_F = ‖(T − π(y))W‖_F since W is unitary
            for be in 0..a {
                for k in 0..m {
                    let mut col = ti.column(be * m + k).into_owned();
                    for al in 0..a {
                        col.axpy(-y[(al, be)], &wi.column(al * m + k), ONE);
                    }
                    res2 += col.norm_squared();
                }
            }
            blocks.push(y);
        }
        (Element { blocks }, res2.sqrt())
    }

    /// Commutant coordinates of `T` when `T·W` is supported on the given rows (no residual).
    pub fn commutant_coords_on_rows(&self, tw: &[CMat], rows: &[usize]) -> Element {
        let blocks = self
            .w
            .iter()
            .enumerate()
            .map(|(i, wi)| {
                let (a, m) = (self.outer[i], self.inner[i]);
                let ti = &tw[i];
                CMat::from_fn(a, a, |al, be| {
                    let mut s = ZERO;
                    for k in 0..m {
                        for &r in rows {
                            s += wi[(r, al * m + k)].conj() * ti[(r, be * m + k)];
                        }
                    }
                    s / cr(m as f64)
                })
            })
            .collect();
        Element { blocks }
    }

    /// Algebra element with blocks `x_i ∈ M_{m_i}` as an operator on `C^d`.
    pub fn algebra_operator(&self, blocks: &[CMat]) -> CMat {
        let mut out = linalg::zeros(self.dim, self.dim);
        for (i, wi) in self.w.iter().enumerate() {
            let big = linalg::kron(&linalg::eye(self.outer[i]), &blocks[i]);
            out += linalg::mm(&linalg::mm(wi, &big), &wi.adjoint());
        }
        out
    }
}

/// Helper for tests and generators: `e^{2πi k/n}`.
pub fn root_of_unity(k: i64, n: usize) -> Complex64 {
    let th = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
    c(th.cos(), th.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unnormalized_trace() {
        let r = MultiMatrixAlgebra::from_sizes(&[1, 1], vec![0.5, 0.6]);
        assert!(matches!(r, Err(AlgebraError::NonNormalizedTrace { .. })));
        assert!(matches!(MultiMatrixAlgebra::new(vec![], vec![]), Err(AlgebraError::EmptyAlgebra)));
    }

    #[test]
    fn one_norm_of_diag_three_minus_four() {
        let a = MultiMatrixAlgebra::full(2);
        let mut x = a.zero();
        x.blocks[0][(0, 0)] = cr(3.0);
        x.blocks[0][(1, 1)] = cr(-4.0);
        assert!((a.norm1(&x) - 3.5).abs() < 1e-14);
        assert!((a.norm_inf(&x) - 4.0).abs() < 1e-14);
        assert!((a.norm2(&x) - 12.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn owner_mismatch_is_reported() {
        let a = MultiMatrixAlgebra::full(2);
        let b = MultiMatrixAlgebra::full(3);
        assert_eq!(a.zero().checked_mul(&b.zero()), Err(AlgebraError::OwnerMismatch));
        assert!(matches!(a.try_trace(&b.one()), Err(AlgebraError::OwnerMismatch)));
    }

    #[test]
    fn commutant_of_identity_is_everything() {
        let cm = commutant(&[linalg::eye(3)], 3).unwrap();
        assert_eq!(cm.len(), 9);
    }

    #[test]
    fn commutant_of_diagonal_left_action_on_l2_m2() {
        let m = MultiMatrixAlgebra::full(2);
        let g = Gns::new(&m);
        let gens = vec![g.left(&m.unit(0, 0, 0)), g.left(&m.unit(0, 1, 1))];
        let cm = commutant(&gens, 4).unwrap();
        assert_eq!(cm.len(), 8);
    }

    #[test]
    fn centers_of_small_algebras() {
        let full: Vec<CMat> = commutant(&[], 2).unwrap();
        assert!(center_and_factor(&full).unwrap().1);
        let mut e0 = linalg::zeros(2, 2);
        e0[(0, 0)] = ONE;
        let mut e1 = linalg::zeros(2, 2);
        e1[(1, 1)] = ONE;
        let (z, f) = center_and_factor(&[e0.clone(), e1.clone()]).unwrap();
        assert_eq!(z.len(), 2);
        assert!(!f);
        let mut off = linalg::zeros(2, 2);
        off[(0, 1)] = ONE;
        assert!(matches!(center_and_factor(&[e0, off]), Err(AlgebraError::NotAnAlgebra { .. })));
    }

    #[test]
    fn left_and_j_right_actions_commute() {
        let a = MultiMatrixAlgebra::from_sizes(&[2, 1], vec![0.25, 0.5]).unwrap();
        let g = Gns::new(&a);
        let x = a.from_blocks(vec![CMat::from_fn(2, 2, |i, j| c(i as f64 + 1.0, j as f64)), linalg::eye(1) * c(0.0, 2.0)]).unwrap();
        let y = a.from_blocks(vec![CMat::from_fn(2, 2, |i, j| c((i * j) as f64, 1.0)), linalg::eye(1)]).unwrap();
        let jyj = g.conjugate_by_j(&g.left(&y));
        assert!((g.left(&x) * &jyj - &jyj * g.left(&x)).norm() < 1e-12);
        // J y J = right multiplication by y^*
        assert!((jyj - g.right(&y.adjoint())).norm() < 1e-12);
        // ⟨xΩ, yΩ⟩ = τ(y^* x)
        let ip = g.vec(&y).dotc(&g.vec(&x));
        assert!((ip - a.inner(&y, &x)).norm() < 1e-12);
        assert!((g.apply_j(&g.vec(&x)) - g.vec(&x.adjoint())).norm() < 1e-12);
    }

    #[test]
    fn polar_and_spectral() {
        let a = MultiMatrixAlgebra::full(2);
        let x = a.from_blocks(vec![CMat::from_fn(2, 2, |i, j| c(1.0 + i as f64, j as f64 - 0.5))]).unwrap();
        let (v, ax) = a.polar(&x).unwrap();
        assert!((&v * &ax).dist(&x) < 1e-12);
        let mut n = a.zero();
        n.blocks[0][(0, 1)] = ONE;
        assert!(matches!(a.spectral(&n), Err(AlgebraError::NotNormal { .. })));
        let h = x.hermitian_part();
        let sp = a.spectral(&h).unwrap();
        let mut rec = a.zero();
        for (l, p) in &sp {
            rec.axpy(*l, p);
        }
        assert!(rec.dist(&h) < 1e-12);
    }
}

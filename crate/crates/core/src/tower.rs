//! Unital inclusions `N ⊆ M` of multi-matrix algebras, Markov data, conditional
//! expectations, the Jones basic construction up to `M₂`, Pimsner–Popa bases and
//! relative commutants.

use crate::algebra_core::{self, AlgebraError, Block, Element, Gns, IsotypicDecomposition, MultiMatrixAlgebra};
use crate::linalg::{self, cr, CMat};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default bound on `dim L²(M₁)`.
pub const DEFAULT_MAX_DIM: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TowerError {
    #[error("Bratteli diagram of the inclusion is disconnected")]
    DisconnectedDiagram,
    #[error("inclusion matrix row {row} is zero (block of N not represented in M)")]
    ZeroRow { row: usize },
    #[error("inclusion matrix column {col} is zero (embedding is not unital)")]
    ZeroColumn { col: usize },
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("element does not live at the expected tower level")]
    LevelMismatch,
    #[error("trace is not a Markov trace (E_M(e1) deviates from lambda*1 by {deviation:e})")]
    TraceNotMarkov { deviation: f64 },
    #[error("dim L2(M1) = {dim} exceeds the desk-scale cap {cap}; raise PGC_MAX_DIM or force")]
    ExceedsDeskScale { dim: usize, cap: usize },
    #[error("Pimsner-Popa basis construction failed (residual {residual:e})")]
    BasisConstructionFailed { residual: f64 },
    #[error("element is not positive (min eigenvalue {min_eig:e})")]
    NotPositive { min_eig: f64 },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Index data of a connected inclusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovData {
    /// `μ = ‖Λ‖²`.
    pub mu: f64,
    /// `λ = 1/μ`.
    pub lambda: f64,
    /// Markov trace weights on the blocks of `M`.
    pub weights_m: Vec<f64>,
    /// Induced weights on the blocks of `N`.
    pub weights_n: Vec<f64>,
}

fn check_diagram(lam: &[Vec<usize>]) -> Result<(usize, usize), TowerError> {
    let rows = lam.len();
    if rows == 0 {
        return Err(TowerError::InvalidEmbedding("empty inclusion matrix".into()));
    }
    let cols = lam[0].len();
    if cols == 0 || lam.iter().any(|r| r.len() != cols) {
        return Err(TowerError::InvalidEmbedding("ragged inclusion matrix".into()));
    }
    for (i, r) in lam.iter().enumerate() {
        if r.iter().all(|&v| v == 0) {
            return Err(TowerError::ZeroRow { row: i });
        }
    }
    for j in 0..cols {
        if lam.iter().all(|r| r[j] == 0) {
            return Err(TowerError::ZeroColumn { col: j });
        }
    }
    // bipartite connectivity: vertices 0..rows are N-blocks, rows..rows+cols M-blocks
    let mut seen = vec![false; rows + cols];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        let nbrs: Vec<usize> = if v < rows {
            (0..cols).filter(|&j| lam[v][j] > 0).map(|j| rows + j).collect()
        } else {
            (0..rows).filter(|&i| lam[i][v - rows] > 0).collect()
        };
        for u in nbrs {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(TowerError::DisconnectedDiagram);
    }
    Ok((rows, cols))
}

/// Sizes of the blocks of `M` determined by `Λ` and the sizes of `N`: `n_j = Σ_i Λ_ij m_i`.
pub fn big_sizes(lam: &[Vec<usize>], small_sizes: &[usize]) -> Vec<usize> {
    let cols = lam.first().map(|r| r.len()).unwrap_or(0);
    (0..cols).map(|j| lam.iter().zip(small_sizes).map(|(r, m)| r[j] * m).sum()).collect()
}

/// Markov data of `Λ` (rows: blocks of `N`, columns: blocks of `M`). The weights of `M`
/// are the Perron eigenvector of `ΛᵀΛ`, normalized so that `τ(1) = 1`.
pub fn markov_data(lam: &[Vec<usize>], small_sizes: &[usize]) -> Result<MarkovData, TowerError> {
    let (rows, cols) = check_diagram(lam)?;
    if small_sizes.len() != rows {
        return Err(TowerError::InvalidEmbedding("size list does not match inclusion matrix".into()));
    }
    let l = DMatrix::<f64>::from_fn(rows, cols, |i, j| lam[i][j] as f64);
    let g = l.transpose() * &l;
    let e = g.symmetric_eigen();
    let (k, mu) = e
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let mut t: Vec<f64> = e.eigenvectors.column(k).iter().cloned().collect();
    if t.iter().sum::<f64>() < 0.0 {
        t.iter_mut().for_each(|x| *x = -*x);
    }
    let sizes = big_sizes(lam, small_sizes);
    let norm: f64 = t.iter().zip(&sizes).map(|(w, n)| w * *n as f64).sum();
    t.iter_mut().for_each(|x| *x /= norm);
    let s: Vec<f64> = (0..rows).map(|i| (0..cols).map(|j| lam[i][j] as f64 * t[j]).sum()).collect();
    Ok(MarkovData { mu, lambda: 1.0 / mu, weights_m: t, weights_n: s })
}

/// A unital *-embedding of `small` into `big`, stored as images of matrix units.
/// The trace of `small` is always the restriction of the trace of `big`.
#[derive(Debug, Clone)]
pub struct Inclusion {
    pub small: MultiMatrixAlgebra,
    pub big: MultiMatrixAlgebra,
    /// `lambda[i][j]`: multiplicity of block `i` of `small` in block `j` of `big`.
    pub lambda: Vec<Vec<usize>>,
    images: Vec<Vec<Element>>,
    /// Per block `j` of `big`, a unitary `U_j` with `ι(x)_j = U_j (⊕_i x_i ⊗ 1_{λ_ij}) U_j^*`.
    frames: Vec<CMat>,
}

/// Unitary frames adapted to the embedding, read off from the images of `e_{k0}`.
fn build_frames(small_sizes: &[usize], big: &MultiMatrixAlgebra, images: &[Vec<Element>]) -> Vec<CMat> {
    big.sizes()
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let mut u = linalg::zeros(n, n);
            let mut col = 0;
            for (i, imgs) in images.iter().enumerate() {
                let m = small_sizes[i];
                let range = linalg::projection_range(&imgs[0].blocks[j]);
                let lam = range.ncols();
                for k in 0..m {
                    for r in 0..lam {
                        if col + k * lam + r < n {
                            let v = &imgs[k * m].blocks[j] * range.column(r);
                            u.set_column(col + k * lam + r, &v);
                        }
                    }
                }
                col += m * lam;
            }
            u
        })
        .collect()
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn induced_weights(lam: &[Vec<usize>], big_w: &[f64]) -> Vec<f64> {
    lam.iter().map(|r| r.iter().zip(big_w).map(|(v, w)| *v as f64 * w).sum()).collect()
}

impl Inclusion {
    /// Standard embedding in multiplicity form: block `j` of `big` is the block diagonal
    /// `⊕_i x_i^{⊕Λ_ij}` in order of `i`.
    pub fn standard(
        small_blocks: Vec<Block>,
        lam: Vec<Vec<usize>>,
        big_labels: Option<Vec<String>>,
        big_weights: Vec<f64>,
    ) -> Result<Self, TowerError> {
        check_diagram(&lam)?;
        let small_sizes: Vec<usize> = small_blocks.iter().map(|b| b.size).collect();
        if small_sizes.len() != lam.len() {
            return Err(TowerError::InvalidEmbedding("block list does not match inclusion matrix".into()));
        }
        let sizes = big_sizes(&lam, &small_sizes);
        let lbl = big_labels.unwrap_or_else(|| labels("m", sizes.len()));
        let big = MultiMatrixAlgebra::new(
            lbl.into_iter().zip(&sizes).map(|(label, &size)| Block { label, size }).collect(),
            big_weights.clone(),
        )?;
        let small = MultiMatrixAlgebra::new(small_blocks, induced_weights(&lam, &big_weights))?;
        let mut images: Vec<Vec<Element>> =
            small_sizes.iter().map(|&m| (0..m * m).map(|_| big.zero()).collect()).collect();
        for j in 0..sizes.len() {
            let mut off = 0;
            for (i, &m) in small_sizes.iter().enumerate() {
                for _ in 0..lam[i][j] {
                    for k in 0..m {
                        for l in 0..m {
                            images[i][k * m + l].blocks[j][(off + k, off + l)] = linalg::ONE;
                        }
                    }
                    off += m;
                }
            }
        }
        let frames = build_frames(&small.sizes(), &big, &images);
        Ok(Inclusion { small, big, lambda: lam, images, frames })
    }

    /// Embedding from explicit images of the matrix units of `small`; validated as a unital
    /// *-homomorphism and the multiplicities are read off from ranks.
    pub fn from_images(
        small_blocks: Vec<Block>,
        big: MultiMatrixAlgebra,
        images: Vec<Vec<Element>>,
        validate: bool,
    ) -> Result<Self, TowerError> {
        let small_sizes: Vec<usize> = small_blocks.iter().map(|b| b.size).collect();
        if images.len() != small_sizes.len() {
            return Err(TowerError::InvalidEmbedding("wrong number of blocks in images".into()));
        }
        for (i, imgs) in images.iter().enumerate() {
            if imgs.len() != small_sizes[i] * small_sizes[i] {
                return Err(TowerError::InvalidEmbedding(format!("block {i}: wrong number of unit images")));
            }
            for x in imgs {
                if !big.owns(x) {
                    return Err(TowerError::InvalidEmbedding(format!("block {i}: image has wrong shape")));
                }
            }
        }
        let lam: Vec<Vec<usize>> = images
            .iter()
            .enumerate()
            .map(|(i, imgs)| {
                (0..big.num_blocks())
                    .map(|j| {
                        let p = &imgs[0].blocks[j];
                        let tr = p.trace().re;
                        let _ = i;
                        tr.round().max(0.0) as usize
                    })
                    .collect()
            })
            .collect();
        check_diagram(&lam)?;
        if validate {
            let mut worst: f64 = 0.0;
            let mut total = big.zero();
            for (i, imgs) in images.iter().enumerate() {
                let m = small_sizes[i];
                for k in 0..m {
                    total = &total + &imgs[k * m + k];
                    for l in 0..m {
                        let a = &imgs[k * m + l];
                        worst = worst.max(a.adjoint().dist(&imgs[l * m + k]));
                        for (i2, imgs2) in images.iter().enumerate() {
                            let m2 = small_sizes[i2];
                            for k2 in 0..m2 {
                                for l2 in 0..m2 {
                                    let prod = a * &imgs2[k2 * m2 + l2];
                                    let expect = if i == i2 && l == k2 { imgs[k * m + l2].clone() } else { big.zero() };
                                    worst = worst.max(prod.dist(&expect));
                                }
                            }
                        }
                    }
                }
            }
            worst = worst.max(total.dist(&big.one()));
            if worst > 1e-9 {
                return Err(TowerError::InvalidEmbedding(format!(
                    "images are not unital *-homomorphic matrix units (residual {worst:e})"
                )));
            }
        }
        let small = MultiMatrixAlgebra::new(small_blocks, induced_weights(&lam, big.weights()))?;
        let frames = build_frames(&small.sizes(), &big, &images);
        Ok(Inclusion { small, big, lambda: lam, images, frames })
    }

    /// `C ⊆ M_n`.
    pub fn scalars_in_full(n: usize) -> Self {
        Self::standard(vec![Block { label: "c".into(), size: 1 }], vec![vec![n]], None, vec![1.0 / n as f64]).unwrap()
    }

    /// `D_n ⊆ M_n` (diagonal matrices).
    pub fn diagonal_in_full(n: usize) -> Self {
        let blocks = (0..n).map(|i| Block { label: format!("d{i}"), size: 1 }).collect();
        Self::standard(blocks, vec![vec![1]; n], None, vec![1.0 / n as f64]).unwrap()
    }

    /// `A = A`.
    pub fn equal(alg: &MultiMatrixAlgebra) -> Self {
        let k = alg.num_blocks();
        let lam = (0..k).map(|i| (0..k).map(|j| usize::from(i == j)).collect()).collect();
        let lbl = alg.blocks().iter().map(|b| b.label.clone()).collect();
        Self::standard(alg.blocks().to_vec(), lam, Some(lbl), alg.weights().to_vec()).unwrap()
    }

    /// Standard embedding of `Λ` carrying the Markov trace.
    pub fn markov(small_blocks: Vec<Block>, lam: Vec<Vec<usize>>) -> Result<Self, TowerError> {
        let sizes: Vec<usize> = small_blocks.iter().map(|b| b.size).collect();
        let md = markov_data(&lam, &sizes)?;
        Self::standard(small_blocks, lam, None, md.weights_m)
    }

    pub fn unit_image(&self, i: usize, k: usize, l: usize) -> &Element {
        let m = self.small.blocks()[i].size;
        &self.images[i][k * m + l]
    }

    pub fn embed(&self, x: &Element) -> Element {
        let sizes = self.small.sizes();
        let blocks = self
            .frames
            .iter()
            .enumerate()
            .map(|(j, u)| {
                let n = u.nrows();
                let mut d = linalg::zeros(n, n);
                let mut off = 0;
                for (i, &m) in sizes.iter().enumerate() {
                    let lam = self.lambda[i][j];
                    if lam == 0 {
                        continue;
                    }
                    let k = linalg::kron(&x.blocks[i], &linalg::eye(lam));
                    d.view_mut((off, off), (m * lam, m * lam)).copy_from(&k);
                    off += m * lam;
                }
                linalg::mm(&linalg::mm(u, &d), &u.adjoint())
            })
            .collect();
        Element { blocks }
    }

    /// `ι(x)_j · v` for block `j` of `big`, through the adapted frame.
    pub fn embed_apply(&self, x: &Element, j: usize, v: &CMat) -> CMat {
        let u = &self.frames[j];
        let t = linalg::mm_ad(u, v);
        let mut out = linalg::zeros(t.nrows(), t.ncols());
        let mut off = 0;
        for (i, &m) in self.small.sizes().iter().enumerate() {
            let lam = self.lambda[i][j];
            let xi = &x.blocks[i];
            for k in 0..m {
                for l in 0..m {
                    let s = xi[(k, l)];
                    if s == linalg::ZERO {
                        continue;
                    }
                    for r in 0..lam {
                        let src = t.row(off + l * lam + r) * s;
                        let mut dst = out.row_mut(off + k * lam + r);
                        dst += src;
                    }
                }
            }
            off += m * lam;
        }
        linalg::mm(u, &out)
    }

    pub fn try_embed(&self, x: &Element) -> Result<Element, TowerError> {
        if !self.small.owns(x) {
            return Err(TowerError::LevelMismatch);
        }
        Ok(self.embed(x))
    }

    /// Trace-preserving conditional expectation onto the small algebra, i.e. the orthogonal
    /// projection of `L²(big)` onto `L²(small)`.
    pub fn expect(&self, x: &Element) -> Element {
        let sizes = self.small.sizes();
        let sw = self.small.weights();
        let bw = self.big.weights();
        let mut out = self.small.zero();
        for (j, u) in self.frames.iter().enumerate() {
            let t = linalg::mm(&linalg::mm_ad(u, &x.blocks[j]), u);
            let mut off = 0;
            for (i, &m) in sizes.iter().enumerate() {
                let lam = self.lambda[i][j];
                for k in 0..m {
                    for l in 0..m {
                        let mut s = linalg::ZERO;
                        for r in 0..lam {
                            s += t[(off + k * lam + r, off + l * lam + r)];
                        }
                        out.blocks[i][(k, l)] += s * cr(bw[j] / sw[i]);
                    }
                }
                off += m * lam;
            }
        }
        out
    }

    pub fn try_expect(&self, x: &Element) -> Result<Element, TowerError> {
        if !self.big.owns(x) {
            return Err(TowerError::LevelMismatch);
        }
        Ok(self.expect(x))
    }

    /// Composite `small ⊆ self.big ⊆ outer.big`.
    pub fn compose(&self, outer: &Inclusion) -> Inclusion {
        let images: Vec<Vec<Element>> =
            self.images.iter().map(|imgs| imgs.iter().map(|x| outer.embed(x)).collect()).collect();
        let lam = mat_mul(&self.lambda, &outer.lambda);
        let frames = build_frames(&self.small.sizes(), &outer.big, &images);
        Inclusion { small: self.small.clone(), big: outer.big.clone(), lambda: lam, images, frames }
    }
}

fn mat_mul(a: &[Vec<usize>], b: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let cols = b[0].len();
    a.iter().map(|r| (0..cols).map(|j| r.iter().zip(b).map(|(x, row)| x * row[j]).sum()).collect()).collect()
}

/// A relative commutant `A′ ∩ B` for an inclusion `A ⊆ B`, with its canonical matrix units
/// (orthogonal for the trace of `B`) and its structure as a multi-matrix algebra.
#[derive(Debug, Clone)]
pub struct RelativeCommutant {
    /// The relative commutant as an abstract algebra, with the restricted trace.
    pub algebra: MultiMatrixAlgebra,
    /// `(block of algebra, α, β) -> matrix unit in B`, in `algebra.units()` order.
    pub units: Vec<Element>,
    unit_norm2: Vec<f64>,
    /// `(block j of B, isometry w, multiplicity m)` per block of the algebra: the block acts on
    /// `range(w) ≅ C^a ⊗ C^m` as `y ⊗ 1_m`.
    parts: Vec<(usize, CMat, usize)>,
}

impl RelativeCommutant {
    pub fn new(incl: &Inclusion) -> Result<Self, TowerError> {
        let big = &incl.big;
        let mut blocks = Vec::new();
        let mut weights = Vec::new();
        let mut units = Vec::new();
        let mut norms = Vec::new();
        let mut parts = Vec::new();
        for (j, bj) in big.blocks().iter().enumerate() {
            let nj = bj.size;
            let f_k0: Vec<Vec<CMat>> = (0..incl.small.num_blocks())
                .map(|i| {
                    let m = incl.small.blocks()[i].size;
                    (0..m).map(|k| incl.unit_image(i, k, 0).blocks[j].clone()).collect()
                })
                .collect();
            let dec = IsotypicDecomposition::from_matrix_units(&f_k0, nj);
            for (r, wi) in dec.w.iter().enumerate() {
                let (a, m) = (dec.outer[r], dec.inner[r]);
                parts.push((j, wi.clone(), m));
                blocks.push(Block { label: format!("{}.{}", bj.label, r), size: a });
                weights.push(big.weights()[j] * m as f64);
                for al in 0..a {
                    for be in 0..a {
                        let mut g = linalg::zeros(nj, nj);
                        for k in 0..m {
                            let u = wi.column(al * m + k);
                            let v = wi.column(be * m + k);
                            g += &u * v.adjoint();
                        }
                        let mut e = big.zero();
                        e.blocks[j] = g;
                        units.push(e);
                        norms.push(big.weights()[j] * m as f64);
                    }
                }
            }
        }
        // weights Σ w_j m = τ of a minimal projection; normalization is inherited from B
        let sum: f64 = blocks.iter().zip(&weights).map(|(b, w)| w * b.size as f64).sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        let algebra = MultiMatrixAlgebra::new(blocks, weights)?;
        Ok(RelativeCommutant { algebra, units, unit_norm2: norms, parts })
    }

    pub fn dim(&self) -> usize {
        self.units.len()
    }

    /// Element of `B` from coordinates in the abstract relative commutant.
    pub fn to_big(&self, y: &Element, big: &MultiMatrixAlgebra) -> Element {
        let mut out = big.zero();
        for (r, (j, w, m)) in self.parts.iter().enumerate() {
            let k = linalg::kron(&y.blocks[r], &linalg::eye(*m));
            out.blocks[*j] += linalg::mm(&linalg::mm(w, &k), &w.adjoint());
        }
        out
    }

    /// Coordinates of the trace-preserving projection of `x ∈ B` onto the relative commutant.
    pub fn from_big(&self, x: &Element, _big: &MultiMatrixAlgebra) -> Element {
        let mut y = self.algebra.zero();
        for (r, (j, w, m)) in self.parts.iter().enumerate() {
            let t = linalg::mm(&linalg::mm_ad(w, &x.blocks[*j]), w);
            let a = y.blocks[r].nrows();
            for al in 0..a {
                for be in 0..a {
                    let mut s = linalg::ZERO;
                    for k in 0..*m {
                        s += t[(al * m + k, be * m + k)];
                    }
                    y.blocks[r][(al, be)] = s / cr(*m as f64);
                }
            }
        }
        y
    }

    /// `⟨u, x⟩` for every matrix unit `u`, in `units` order.
    pub fn unit_inners(&self, x: &Element, big: &MultiMatrixAlgebra) -> Vec<Complex64> {
        let y = self.from_big(x, big);
        self.algebra
            .units()
            .into_iter()
            .zip(&self.unit_norm2)
            .map(|((i, k, l), n)| y.blocks[i][(k, l)] * cr(*n))
            .collect()
    }

    /// Conditional expectation of `B` onto the relative commutant.
    pub fn project(&self, x: &Element, big: &MultiMatrixAlgebra) -> Element {
        self.to_big(&self.from_big(x, big), big)
    }

    /// `‖x - E(x)‖₂ / max(1, ‖x‖₂)` in `L²(B)`.
    pub fn membership_residual(&self, x: &Element, big: &MultiMatrixAlgebra) -> f64 {
        let p = self.project(x, big);
        big.norm2(&(x - &p)) / big.norm2(x).max(1.0)
    }

    /// Orthogonal basis in `B`.
    pub fn basis(&self) -> &[Element] {
        &self.units
    }
}

/// One Jones basic construction `A ⊆ B ⊆ B₁ = J A′ J` on `L²(B)`.
#[derive(Debug, Clone)]
pub struct BasicConstruction {
    pub gns: Gns,
    /// `B ⊆ B₁`.
    pub incl: Inclusion,
    /// The Jones projection onto `L²(A)`, as an element of `B₁`.
    pub e: Element,
    /// `B₁` acting on `L²(B)` as the commutant of the right action of `A`.
    pub rep: IsotypicDecomposition,
    /// Largest residual met while extracting `B` and `e` into `B₁` coordinates.
    pub extraction_residual: f64,
}

impl BasicConstruction {
    pub fn new(lower: &Inclusion, mu: f64) -> Result<Self, TowerError> {
        let (a, b) = (&lower.small, &lower.big);
        let gns = Gns::new(b);
        let d = gns.dim();
        // f_{kl} = R(e_{lk}) are matrix units of the right action of A on L²(B)
        // f_{kl} = R(e_{lk}), applied blockwise rather than as dense operators on L²(B)
        let minimal: Vec<CMat> = (0..a.num_blocks()).map(|i| gns.right(lower.unit_image(i, 0, 0))).collect();
        let rep = IsotypicDecomposition::from_unit_action(&minimal, &a.sizes(), d, |i, k, v| {
            gns.vec(&(&gns.unvec(v) * lower.unit_image(i, 0, k)))
        });
        if rep.w.len() != a.num_blocks() {
            return Err(TowerError::InvalidEmbedding("some block of the subalgebra acts as zero".into()));
        }
        let mut u: Vec<f64> = a.weights().iter().map(|s| s / mu).collect();
        let sum: f64 = u.iter().zip(&rep.outer).map(|(w, n)| w * *n as f64).sum();
        u.iter_mut().for_each(|w| *w /= sum);
        let blocks: Vec<Block> = a
            .blocks()
            .iter()
            .zip(&rep.outer)
            .map(|(bl, &size)| Block { label: format!("{}'", bl.label), size })
            .collect();
        let upper = MultiMatrixAlgebra::new(blocks, u)?;
        let mut worst: f64 = 0.0;
        let mut images: Vec<Vec<Element>> = Vec::new();
        for (j, bj) in b.blocks().iter().enumerate() {
            let n = bj.size;
            // only e_{k0} is extracted; e_{kl} = e_{k0} e_{l0}^*
            let col: Vec<Element> = (0..n)
                .map(|k| {
                    if k == 0 {
                        let x = b.unit(j, 0, 0);
                        let tw: Vec<CMat> = rep.w.iter().map(|wi| gns.left_apply(&x, wi)).collect();
                        let (y, r) = rep.commutant_coords_applied(&tw);
                        worst = worst.max(r);
                        return y;
                    }
                    // L(e_{k0}) moves row (0, c) to row (k, c) and kills everything else
                    let rows: Vec<usize> = (0..n).map(|cc| gns.index(j, k, cc)).collect();
                    let tw: Vec<CMat> = rep
                        .w
                        .iter()
                        .map(|wi| {
                            let mut t = linalg::zeros(d, wi.ncols());
                            for cc in 0..n {
                                t.set_row(gns.index(j, k, cc), &wi.row(gns.index(j, 0, cc)));
                            }
                            t
                        })
                        .collect();
                    rep.commutant_coords_on_rows(&tw, &rows)
                })
                .collect();
            // e_{kl} = (e_{k0} Q)(e_{l0} Q)^* with Q an orthonormal frame of the range of e_{00}
            let frames: Vec<CMat> = col[0].blocks.iter().map(linalg::projection_range).collect();
            let thin: Vec<Vec<CMat>> =
                col.iter().map(|c| c.blocks.iter().zip(&frames).map(|(x, q)| linalg::mm(x, q)).collect()).collect();
            let mut imgs = Vec::with_capacity(n * n);
            for k in 0..n {
                for l in 0..n {
                    let blocks = thin[k].iter().zip(&thin[l]).map(|(x, y)| linalg::mm(x, &y.adjoint())).collect();
                    imgs.push(Element { blocks });
                }
            }
            images.push(imgs);
        }
        let incl = Inclusion::from_images(b.blocks().to_vec(), upper, images, false)?;
        // Jones projection onto span{ aΩ : a ∈ A }
        let mut proj = linalg::zeros(d, d);
        for (i, bl) in a.blocks().iter().enumerate() {
            let m = bl.size;
            let s = a.weights()[i];
            for k in 0..m {
                for l in 0..m {
                    let v = gns.vec(lower.unit_image(i, k, l)) / cr(s.sqrt());
                    proj += &v * v.adjoint();
                }
            }
        }
        let (e, r) = rep.commutant_coords(&proj);
        worst = worst.max(r);
        let e = algebra_core::range_projection(&e, 1e-10);
        Ok(BasicConstruction { gns, incl, e, rep, extraction_residual: worst })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TowerOptions {
    pub force: bool,
    pub max_dim: Option<usize>,
}

impl Default for TowerOptions {
    fn default() -> Self {
        TowerOptions { force: false, max_dim: None }
    }
}

impl TowerOptions {
    /// Effective cap: explicit value, else `PGC_MAX_DIM`, else the default.
    pub fn cap(&self) -> usize {
        self.max_dim
            .or_else(|| std::env::var("PGC_MAX_DIM").ok().and_then(|v| v.parse().ok()))
            .unwrap_or(DEFAULT_MAX_DIM)
    }
}

/// Sanity checks recorded while building a tower.
#[derive(Debug, Clone, Serialize)]
pub struct TowerDiagnostics {
    pub markov_deviation: f64,
    pub tau1_e1_deviation: f64,
    pub e1_compression_residual: f64,
    pub extraction_residual: f64,
    pub jones_relation_residual: f64,
}

/// `N ⊆ M ⊆ M₁ ⊆ M₂` with Jones projections `e₁ ∈ M₁`, `e₂ ∈ M₂` and the two-box spaces.
#[derive(Debug, Clone)]
pub struct JonesTower {
    pub base: Inclusion,
    pub mu: f64,
    pub lambda: f64,
    pub first: BasicConstruction,
    pub second: BasicConstruction,
    pub n_in_m1: Inclusion,
    pub m_in_m2: Inclusion,
    /// `N′ ∩ M`.
    pub nm: RelativeCommutant,
    /// `N′ ∩ M₁`.
    pub plus: RelativeCommutant,
    /// `M′ ∩ M₂`.
    pub minus: RelativeCommutant,
    pub diagnostics: TowerDiagnostics,
}

impl JonesTower {
    pub fn build(base: Inclusion, opts: TowerOptions) -> Result<Self, TowerError> {
        let small_sizes = base.small.sizes();
        let md = markov_data(&base.lambda, &small_sizes)?;
        let mu = md.mu;
        let first_sizes = big_sizes(&transpose(&base.lambda), &base.big.sizes());
        let dim_l2_m1: usize = first_sizes.iter().map(|a| a * a).sum();
        let cap = opts.cap();
        if dim_l2_m1 > cap && !opts.force {
            return Err(TowerError::ExceedsDeskScale { dim: dim_l2_m1, cap });
        }
        let first = BasicConstruction::new(&base, mu)?;
        let m1 = &first.incl.big;
        // E_M(e₁) = λ·1 and τ₁(e₁) = λ
        let em = first.incl.expect(&first.e);
        let markov_deviation = em.dist(&base.big.one().scale_re(md.lambda));
        let tau1_e1_deviation = (m1.trace(&first.e).re - md.lambda).abs();
        if markov_deviation > 1e-9 || tau1_e1_deviation > 1e-9 {
            return Err(TowerError::TraceNotMarkov { deviation: markov_deviation.max(tau1_e1_deviation) });
        }
        // e₁ x e₁ = E_N(x) e₁ on matrix units of M
        let mut comp: f64 = 0.0;
        for (i, k, l) in base.big.units() {
            let x = base.big.unit(i, k, l);
            let xm1 = first.incl.embed(&x);
            let lhs = &(&first.e * &xm1) * &first.e;
            let rhs = &first.incl.embed(&base.embed(&base.expect(&x))) * &first.e;
            comp = comp.max(lhs.dist(&rhs));
        }
        let second = BasicConstruction::new(&first.incl, mu)?;
        let e1_in_m2 = second.incl.embed(&first.e);
        let jr = (&(&e1_in_m2 * &second.e) * &e1_in_m2).dist(&e1_in_m2.scale_re(md.lambda))
            .max((&(&second.e * &e1_in_m2) * &second.e).dist(&second.e.scale_re(md.lambda)));
        let n_in_m1 = base.compose(&first.incl);
        let m_in_m2 = first.incl.compose(&second.incl);
        let nm = RelativeCommutant::new(&base)?;
        let plus = RelativeCommutant::new(&n_in_m1)?;
        let minus = RelativeCommutant::new(&m_in_m2)?;
        let diagnostics = TowerDiagnostics {
            markov_deviation,
            tau1_e1_deviation,
            e1_compression_residual: comp,
            extraction_residual: first.extraction_residual.max(second.extraction_residual),
            jones_relation_residual: jr,
        };
        Ok(JonesTower { base, mu, lambda: md.lambda, first, second, n_in_m1, m_in_m2, nm, plus, minus, diagnostics })
    }

    pub fn n(&self) -> &MultiMatrixAlgebra {
        &self.base.small
    }
    pub fn m(&self) -> &MultiMatrixAlgebra {
        &self.base.big
    }
    pub fn m1(&self) -> &MultiMatrixAlgebra {
        &self.first.incl.big
    }
    pub fn m2(&self) -> &MultiMatrixAlgebra {
        &self.second.incl.big
    }
    pub fn e1(&self) -> &Element {
        &self.first.e
    }
    pub fn e2(&self) -> &Element {
        &self.second.e
    }
    pub fn gns_m(&self) -> &Gns {
        &self.first.gns
    }
    pub fn gns_m1(&self) -> &Gns {
        &self.second.gns
    }

    /// `E_N : M → N`.
    pub fn e_n(&self, x: &Element) -> Result<Element, TowerError> {
        self.base.try_expect(x)
    }
    /// `E_M : M₁ → M`.
    pub fn e_m(&self, x: &Element) -> Result<Element, TowerError> {
        self.first.incl.try_expect(x)
    }
    /// `E_{M₁} : M₂ → M₁`.
    pub fn e_m1(&self, x: &Element) -> Result<Element, TowerError> {
        self.second.incl.try_expect(x)
    }

    /// `M → M₁`.
    pub fn m_to_m1(&self, x: &Element) -> Element {
        self.first.incl.embed(x)
    }
    /// `M₁ → M₂`.
    pub fn m1_to_m2(&self, x: &Element) -> Element {
        self.second.incl.embed(x)
    }
    /// `N → M`.
    pub fn n_to_m(&self, x: &Element) -> Element {
        self.base.embed(x)
    }

    /// An element of `M₁` as an operator on `L²(M)`.
    pub fn m1_operator(&self, y: &Element) -> CMat {
        self.first.rep.commutant_operator(y)
    }

    /// An operator on `L²(M)` in `M₁` coordinates, with the distance to `M₁`.
    pub fn m1_from_operator(&self, t: &CMat) -> (Element, f64) {
        self.first.rep.commutant_coords(t)
    }

    /// An element of `M₂` as an operator on `L²(M₁)`.
    pub fn m2_operator(&self, y: &Element) -> CMat {
        self.second.rep.commutant_operator(y)
    }

    pub fn m2_from_operator(&self, t: &CMat) -> (Element, f64) {
        self.second.rep.commutant_coords(t)
    }

    /// `dim N′∩M₁` (equal to `dim M′∩M₂`).
    pub fn two_box_dim(&self) -> usize {
        self.plus.dim()
    }

    /// Relative commutant of the requested level pair.
    pub fn relative_commutant(&self, which: RelComm) -> &RelativeCommutant {
        match which {
            RelComm::NInM => &self.nm,
            RelComm::NInM1 => &self.plus,
            RelComm::MInM2 => &self.minus,
        }
    }

    /// Pimsner–Popa basis `{η_j} ⊂ M`: `x = Σ_j E_N(x η_j^*) η_j` and `Σ_j τ(η_j η_j^*) = μ`.
    ///
    /// Built by sweeping `1 ∈ M₁` with partial isometries `v_c ∈ e₁M₁` (`Σ v_c^* v_c = 1`)
    /// and reading off `η_c = μ E_M(v_c)`, so that `v_c = e₁ η_c`.
    pub fn pp_basis(&self) -> Result<Vec<Element>, TowerError> {
        let m1 = self.m1();
        let e1 = self.e1();
        let mut per_block: Vec<(CMat, usize)> = Vec::new();
        let mut count = 0;
        for (i, blk) in e1.blocks.iter().enumerate() {
            let (vals, vecs) = linalg::herm_eig(blk);
            let idx: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > 0.5).collect();
            let a = m1.blocks()[i].size;
            let r = idx.len();
            if r == 0 {
                return Err(TowerError::BasisConstructionFailed { residual: f64::INFINITY });
            }
            let mut phi = linalg::zeros(a, r);
            for (c, &k) in idx.iter().enumerate() {
                phi.set_column(c, &vecs.column(k));
            }
            count = count.max((a + r - 1) / r);
            per_block.push((phi, r));
        }
        let mut etas = Vec::with_capacity(count);
        let mut worst: f64 = 0.0;
        for c in 0..count {
            let mut v = m1.zero();
            for (i, (phi, r)) in per_block.iter().enumerate() {
                let a = m1.blocks()[i].size;
                for l in (c * r)..((c + 1) * r).min(a) {
                    let col = phi.column(l - c * r);
                    for row in 0..a {
                        v.blocks[i][(row, l)] += col[row];
                    }
                }
            }
            let eta = self.first.incl.expect(&v).scale_re(self.mu);
            worst = worst.max((e1 * &self.m_to_m1(&eta)).dist(&v));
            etas.push(eta);
        }
        let res = self.pp_residual(&etas);
        worst = worst.max(res);
        if worst > 1e-8 {
            return Err(TowerError::BasisConstructionFailed { residual: worst });
        }
        Ok(etas)
    }

    /// Max of the reconstruction residual over matrix units of `M` and `|Σ τ(ηη^*) - μ|`.
    pub fn pp_residual(&self, etas: &[Element]) -> f64 {
        let m = self.m();
        let mut worst: f64 = 0.0;
        for (i, k, l) in m.units() {
            let x = m.unit(i, k, l);
            let mut rec = m.zero();
            for eta in etas {
                let c = self.n_to_m(&self.base.expect(&(&x * &eta.adjoint())));
                rec = &rec + &(&c * eta);
            }
            worst = worst.max(rec.dist(&x));
        }
        let total: f64 = etas.iter().map(|e| m.trace(&(e * &e.adjoint())).re).sum();
        worst.max((total - self.mu).abs() / self.mu)
    }

    /// Smallest eigenvalue of `E_N(x) - μ⁻¹x` for positive `x ∈ M`; the Pimsner–Popa
    /// inequality asserts it is at least `-1e-9 ‖x‖`.
    pub fn pp_inequality_check(&self, x: &Element) -> Result<f64, TowerError> {
        if !self.m().owns(x) {
            return Err(TowerError::LevelMismatch);
        }
        let scale = x.norm_inf().max(1e-300);
        let min_eig = x.min_eig();
        if min_eig < -1e-12 * scale || x.dist(&x.adjoint()) > 1e-12 * scale {
            return Err(TowerError::NotPositive { min_eig });
        }
        let d = &self.n_to_m(&self.base.expect(x)) - &x.scale_re(self.lambda);
        Ok(d.min_eig())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelComm {
    NInM,
    NInM1,
    MInM2,
}

pub fn transpose(lam: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let cols = lam[0].len();
    (0..cols).map(|j| lam.iter().map(|r| r[j]).collect()).collect()
}

/// `(E_N(η_k η_j^*))_{jk}` is diagonal with projections on the diagonal for a basis from
/// [`JonesTower::pp_basis`]; this returns the deviation from that shape.
pub fn pp_gram_defect(tower: &JonesTower, etas: &[Element]) -> f64 {
    let mut worst: f64 = 0.0;
    for (j, ej) in etas.iter().enumerate() {
        for (k, ek) in etas.iter().enumerate() {
            let g = tower.base.expect(&(ek * &ej.adjoint()));
            if j == k {
                worst = worst.max((&g * &g).dist(&g));
            } else {
                worst = worst.max(g.frob());
            }
        }
    }
    worst
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markov_data_examples() {
        assert!((markov_data(&[vec![2]], &[1]).unwrap().mu - 4.0).abs() < 1e-12);
        let d3 = markov_data(&vec![vec![1]; 3], &[1, 1, 1]).unwrap();
        assert!((d3.mu - 3.0).abs() < 1e-12);
        assert!((markov_data(&[vec![1]], &[2]).unwrap().mu - 1.0).abs() < 1e-12);
        assert_eq!(markov_data(&[vec![1, 0], vec![0, 1]], &[1, 1]), Err(TowerError::DisconnectedDiagram));
        assert_eq!(markov_data(&[vec![1], vec![0]], &[1, 1]), Err(TowerError::ZeroRow { row: 1 }));
    }

    #[test]
    fn conditional_expectations_on_small_examples() {
        let d2 = Inclusion::diagonal_in_full(2);
        let x = d2.big.from_blocks(vec![CMat::from_fn(2, 2, |i, j| linalg::c(1.0 + i as f64, j as f64))]).unwrap();
        let e = d2.embed(&d2.expect(&x));
        assert!((e.blocks[0][(0, 1)]).norm() < 1e-14);
        assert!((e.blocks[0][(1, 1)] - x.blocks[0][(1, 1)]).norm() < 1e-14);
        let c2 = Inclusion::scalars_in_full(2);
        let e = c2.embed(&c2.expect(&x));
        let t = c2.big.trace(&x);
        assert!(e.dist(&c2.big.one().scale(t)) < 1e-14);
        assert_eq!(d2.try_expect(&d2.small.one()).unwrap_err(), TowerError::LevelMismatch);
    }

    #[test]
    fn d3_in_m3_tower_dimensions() {
        let t = JonesTower::build(Inclusion::diagonal_in_full(3), TowerOptions::default()).unwrap();
        assert_eq!(t.m1().dim(), 27);
        assert_eq!(t.two_box_dim(), t.minus.dim());
        assert!(t.diagnostics.e1_compression_residual < 1e-12);
        assert!(t.diagnostics.jones_relation_residual < 1e-12);
    }

    #[test]
    fn desk_scale_cap() {
        let r = JonesTower::build(Inclusion::scalars_in_full(3), TowerOptions { force: false, max_dim: Some(10) });
        assert!(matches!(r, Err(TowerError::ExceedsDeskScale { dim: 81, cap: 10 })));
    }
}

//! Dense complex linear algebra kernels shared by every layer.
//!
//! Everything is `DMatrix<Complex64>`. Hermitian problems go through the
//! symmetric eigensolver, general spectra through a complex Schur form with
//! eigenvalue reordering, and nullspaces through a padded SVD.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn zeros(r: usize, k: usize) -> CMat {
    CMat::zeros(r, k)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * cr(0.5)
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).norm()
}

/// `a·b` through four real products, which go through the blocked real kernel; small
/// products stay on the generic path.
pub fn mm(a: &CMat, b: &CMat) -> CMat {
    let (r, k, cols) = (a.nrows(), a.ncols(), b.ncols());
    if r * k * cols < 32 * 32 * 32 {
        return a * b;
    }
    let ar = a.map(|z| z.re);
    let ai = a.map(|z| z.im);
    let br = b.map(|z| z.re);
    let bi = b.map(|z| z.im);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    CMat::from_fn(r, cols, |i, j| c(re[(i, j)], im[(i, j)]))
}

/// `a^*·b`.
pub fn mm_ad(a: &CMat, b: &CMat) -> CMat {
    mm(&a.adjoint(), b)
}

/// Eigen-decomposition of the Hermitian part; eigenvalues ascending, eigenvectors as columns.
///
/// Goes through the real symmetric form `[[A, -B], [B, A]]` of `A + iB`: every eigenvalue
/// appears twice there, and a complex orthonormal basis of each eigenspace is recovered by
/// pivoted Gram–Schmidt on `x + iy`. (The complex Hermitian solver mixes nearly degenerate
/// eigenvectors of different eigenvalues.)
pub fn herm_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), zeros(0, 0));
    }
    let h = hermitian_part(m);
    let mut r = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            r[(i, j)] = z.re;
            r[(i + n, j + n)] = z.re;
            r[(i, j + n)] = -z.im;
            r[(i + n, j)] = z.im;
        }
    }
    let e = r.symmetric_eigen();
    let mut idx: Vec<usize> = (0..2 * n).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].partial_cmp(&e.eigenvalues[b]).unwrap());
    let scale = e.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let cand = |i: usize| CVec::from_fn(n, |k, _| c(e.eigenvectors[(k, i)], e.eigenvectors[(k + n, i)]));
    let mut vals = Vec::with_capacity(n);
    let mut vecs = zeros(n, n);
    let mut start = 0;
    while start < 2 * n && vals.len() < n {
        let mut end = start + 1;
        while end < 2 * n && e.eigenvalues[idx[end]] - e.eigenvalues[idx[end - 1]] < 1e-9 * scale {
            end += 1;
        }
        let mut pool: Vec<CVec> = idx[start..end].iter().map(|&i| cand(i)).collect();
        for _ in 0..(end - start).div_ceil(2) {
            if vals.len() == n {
                break;
            }
            let (best, nrm) = pool.iter().enumerate().map(|(i, v)| (i, v.norm())).fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            if nrm < 1e-6 {
                break;
            }
            let q = &pool[best] / c(nrm, 0.0);
            for v in pool.iter_mut() {
                let ip = q.dotc(v);
                v.axpy(-ip, &q, ONE);
            }
            vals.push((q.dotc(&(&h * &q))).re);
            vecs.set_column(vals.len() - 1, &q);
        }
        start = end;
    }
    // order by the Rayleigh quotients (clusters are already sorted; this only fixes ties)
    let mut ord: Vec<usize> = (0..vals.len()).collect();
    ord.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
    let vals_sorted: Vec<f64> = ord.iter().map(|&i| vals[i]).collect();
    let mut out = zeros(n, n);
    for (k, &i) in ord.iter().enumerate() {
        out.set_column(k, &vecs.column(i));
    }
    (vals_sorted, out)
}

/// Orthonormal basis of the range of an (approximate) orthogonal projection, by column-pivoted
/// Gram–Schmidt; the rank is read off the trace.
pub fn projection_range(p: &CMat) -> CMat {
    let n = p.nrows();
    let rank = (p.trace().re.round().max(0.0) as usize).min(n);
    let mut pool: Vec<CVec> = (0..n).map(|j| p.column(j).into_owned()).collect();
    let mut out = zeros(n, rank);
    for k in 0..rank {
        let (best, nrm) = pool.iter().enumerate().map(|(i, v)| (i, v.norm())).fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        let q = &pool[best] / c(nrm, 0.0);
        for v in pool.iter_mut() {
            let ip = q.dotc(v);
            v.axpy(-ip, &q, ONE);
        }
        out.set_column(k, &q);
    }
    out
}

pub fn min_herm_eig(m: &CMat) -> f64 {
    herm_eig(m).0.first().cloned().unwrap_or(0.0)
}

/// Apply a real function to the spectrum of the Hermitian part.
pub fn herm_func(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = herm_eig(m);
    let n = vals.len();
    let mut d = zeros(n, n);
    for (i, v) in vals.iter().enumerate() {
        d[(i, i)] = cr(f(*v));
    }
    &vecs * d * vecs.adjoint()
}

/// Orthonormal basis of the range, cut at `tol` relative to the largest singular value.
pub fn range_basis(m: &CMat, tol: f64) -> CMat {
    let (r, k) = (m.nrows(), m.ncols());
    if r == 0 || k == 0 {
        return zeros(r, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return zeros(r, 0);
    }
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol * smax)
        .collect();
    let mut out = zeros(r, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &u.column(i));
    }
    out
}

/// Orthonormal basis (columns) of the kernel. A singular value counts as zero when it is
/// at most `tol * max(1, sigma_max)`.
pub fn nullspace(m: &CMat, tol: f64) -> CMat {
    let (r, k) = (m.nrows(), m.ncols());
    if k == 0 {
        return zeros(0, 0);
    }
    // Thin SVD only exposes min(r, k) right singular vectors; pad to at least square.
    let a = if r < k {
        let mut p = zeros(k, k);
        p.view_mut((0, 0), (r, k)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = a.svd(false, true);
    let vt = svd.v_t.unwrap();
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let cut = tol * smax.max(1.0);
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] <= cut).collect();
    let mut out = zeros(k, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        let row = vt.row(i).adjoint();
        out.set_column(j, &row);
    }
    out
}

/// Numerical rank relative to the largest singular value.
pub fn rank(m: &CMat, tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&x| x > tol * smax).count(),
        _ => 0,
    }
}

/// Least-squares solve of `X * a = b` for `X` (minimal norm), via SVD of `a`.
pub fn solve_right(a: &CMat, b: &CMat, tol: f64) -> CMat {
    // X a = b  <=>  a^H X^H = b^H
    let ah = a.adjoint();
    let bh = b.adjoint();
    let svd = ah.svd(true, true);
    let xh = svd.solve(&bh, tol * svd.singular_values.max().max(1e-300)).expect("svd solve");
    xh.adjoint()
}

/// Hausdorff distance between two finite subsets of the complex plane.
pub fn hausdorff(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { f64::INFINITY };
    }
    let d = |x: &Complex64, s: &[Complex64]| s.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min);
    let ab = a.iter().map(|x| d(x, b)).fold(0.0, f64::max);
    let ba = b.iter().map(|x| d(x, a)).fold(0.0, f64::max);
    ab.max(ba)
}

/// Complex Schur form `m = q t q^H` with `t` upper triangular.
pub fn schur(m: &CMat) -> (CMat, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (zeros(0, 0), zeros(0, 0));
    }
    let (q, mut t) = m.clone().schur().unpack();
    for i in 0..n {
        for j in 0..i {
            t[(i, j)] = ZERO;
        }
    }
    (q, t)
}

pub fn eigenvalues(m: &CMat) -> Vec<Complex64> {
    let (_, t) = schur(m);
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

pub fn spectral_radius(m: &CMat) -> f64 {
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Swap diagonal entries k and k+1 of an upper-triangular Schur factor by a Givens rotation.
fn swap_adjacent(q: &mut CMat, t: &mut CMat, k: usize) {
    let n = t.nrows();
    let t11 = t[(k, k)];
    let t22 = t[(k + 1, k + 1)];
    let t12 = t[(k, k + 1)];
    let v1 = t12;
    let v2 = t22 - t11;
    let nv = (v1.norm_sqr() + v2.norm_sqr()).sqrt();
    if nv == 0.0 {
        return;
    }
    let (g11, g21) = (v1 / nv, v2 / nv);
    let (g12, g22) = (-g21.conj(), g11.conj());
    // t <- G^H t on rows k, k+1
    for j in 0..n {
        let a = t[(k, j)];
        let b = t[(k + 1, j)];
        t[(k, j)] = g11.conj() * a + g21.conj() * b;
        t[(k + 1, j)] = g12.conj() * a + g22.conj() * b;
    }
    // t <- t G, q <- q G on columns k, k+1
    for i in 0..n {
        let a = t[(i, k)];
        let b = t[(i, k + 1)];
        t[(i, k)] = a * g11 + b * g21;
        t[(i, k + 1)] = a * g12 + b * g22;
        let a = q[(i, k)];
        let b = q[(i, k + 1)];
        q[(i, k)] = a * g11 + b * g21;
        q[(i, k + 1)] = a * g12 + b * g22;
    }
    t[(k + 1, k)] = ZERO;
}

/// Riesz (spectral) projection onto the generalized eigenspace of the eigenvalues selected
/// by `pick`, computed from a reordered Schur form and a triangular Sylvester solve.
pub fn riesz_projection(m: &CMat, pick: impl Fn(Complex64) -> bool) -> CMat {
    let n = m.nrows();
    let (mut q, mut t) = schur(m);
    let mut top = 0;
    for i in 0..n {
        if pick(t[(i, i)]) {
            let mut k = i;
            while k > top {
                swap_adjacent(&mut q, &mut t, k - 1);
                k -= 1;
            }
            top += 1;
        }
    }
    let p = top;
    if p == 0 {
        return zeros(n, n);
    }
    if p == n {
        return eye(n);
    }
    let qn = n - p;
    let t11 = t.view((0, 0), (p, p)).into_owned();
    let t12 = t.view((0, p), (p, qn)).into_owned();
    let t22 = t.view((p, p), (qn, qn)).into_owned();
    // T11 X - X T22 = -T12, column by column with back substitution.
    let mut x = zeros(p, qn);
    for j in 0..qn {
        let mut rhs: Vec<Complex64> = (0..p).map(|i| -t12[(i, j)]).collect();
        for l in 0..j {
            let coef = t22[(l, j)];
            if coef != ZERO {
                for i in 0..p {
                    rhs[i] += x[(i, l)] * coef;
                }
            }
        }
        let shift = t22[(j, j)];
        for i in (0..p).rev() {
            let mut s = rhs[i];
            for l in (i + 1)..p {
                s -= t11[(i, l)] * x[(l, j)];
            }
            x[(i, j)] = s / (t11[(i, i)] - shift);
        }
    }
    let mut blk = zeros(n, n);
    for i in 0..p {
        blk[(i, i)] = ONE;
        for j in 0..qn {
            blk[(i, p + j)] = -x[(i, j)];
        }
    }
    &q * blk * q.adjoint()
}

/// Group points of the complex plane into clusters by single linkage at `radius`.
pub fn cluster(points: &[Complex64], radius: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(l: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while l[r] != r {
            r = l[r];
        }
        let mut k = i;
        while l[k] != r {
            let nx = l[k];
            l[k] = r;
            k = nx;
        }
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (points[i] - points[j]).norm() <= radius {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                if a != b {
                    label[b.max(a)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let r = find(&mut label, i);
        match groups.iter_mut().find(|(k, _)| *k == r) {
            Some((_, g)) => g.push(i),
            None => groups.push((r, vec![i])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    let mut out = zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// `tr(a^H b)` without forming the product.
pub fn hs_inner(a: &CMat, b: &CMat) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `tr(a b)` without forming the product.
pub fn trace_prod(a: &CMat, b: &CMat) -> Complex64 {
    let n = a.nrows();
    let mut s = ZERO;
    for i in 0..n {
        for k in 0..a.ncols() {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

/// Modified Gram-Schmidt on columns, dropping columns whose residual norm falls below `tol`.
pub fn orthonormalize(m: &CMat, tol: f64) -> CMat {
    let mut cols: Vec<CVec> = Vec::new();
    for j in 0..m.ncols() {
        let mut v: CVec = m.column(j).into_owned();
        for _ in 0..2 {
            for u in &cols {
                let p = u.dotc(&v);
                v -= u * p;
            }
        }
        let nv = v.norm();
        if nv > tol {
            cols.push(v / cr(nv));
        }
    }
    let mut out = zeros(m.nrows(), cols.len());
    for (j, v) in cols.iter().enumerate() {
        out.set_column(j, v);
    }
    out
}

/// Distance between the subspaces spanned by two orthonormal column sets (projector gap).
pub fn subspace_gap(a: &CMat, b: &CMat) -> f64 {
    let pa = a * a.adjoint();
    let pb = b * b.adjoint();
    op_norm(&(pa - pb))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, seed: u64) -> CMat {
        let mut s = seed;
        CMat::from_fn(n, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5;
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5;
            c(a, b)
        })
    }

    #[test]
    fn riesz_projection_is_idempotent_and_commutes() {
        let m = sample(7, 3);
        let ev = eigenvalues(&m);
        let target = ev[2];
        let p = riesz_projection(&m, |z| (z - target).norm() < 1e-7);
        assert!((&p * &p - &p).norm() < 1e-9);
        assert!((&m * &p - &p * &m).norm() < 1e-9);
        let tr: Complex64 = (0..7).map(|i| p[(i, i)]).sum();
        assert!((tr - cr(1.0)).norm() < 1e-9);
    }

    #[test]
    fn riesz_projections_sum_to_identity() {
        let m = sample(6, 11);
        let ev = eigenvalues(&m);
        let mut total = zeros(6, 6);
        for z in &ev {
            let z = *z;
            total += riesz_projection(&m, |w| (w - z).norm() < 1e-9);
        }
        assert!((total - eye(6)).norm() < 1e-8);
    }

    #[test]
    fn nullspace_of_wide_matrix() {
        let mut a = zeros(2, 4);
        a[(0, 0)] = ONE;
        a[(1, 1)] = ONE;
        let k = nullspace(&a, 1e-12);
        assert_eq!(k.ncols(), 2);
        assert!((&a * &k).norm() < 1e-12);
    }

    #[test]
    fn hausdorff_of_permuted_sets_is_zero() {
        let a = vec![c(1.0, 0.0), c(0.0, 1.0)];
        let b = vec![c(0.0, 1.0), c(1.0, 0.0), c(1.0, 0.0)];
        assert_eq!(hausdorff(&a, &b), 0.0);
    }
}

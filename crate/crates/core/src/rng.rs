//! Seeded, portable randomness: ChaCha8 keyed by a 64-bit seed and split by stream id.

use crate::algebra_core::{Element, MultiMatrixAlgebra};
use crate::linalg::{c, CMat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type PgcRng = ChaCha8Rng;

pub fn stream(seed: u64, stream_id: u64) -> PgcRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream_id);
    r
}

pub fn gaussian_matrix(rng: &mut PgcRng, r: usize, k: usize) -> CMat {
    CMat::from_fn(r, k, |_, _| {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        c(a, b) / c(2f64.sqrt(), 0.0)
    })
}

pub fn gaussian_element(rng: &mut PgcRng, alg: &MultiMatrixAlgebra) -> Element {
    Element { blocks: alg.sizes().iter().map(|&n| gaussian_matrix(rng, n, n)).collect() }
}

/// Haar-distributed unitary via QR with phase correction.
pub fn haar_unitary(rng: &mut PgcRng, n: usize) -> CMat {
    let g = gaussian_matrix(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        let mut col = q.column_mut(j);
        col *= ph;
    }
    q
}

/// Projection of uniformly drawn rank in `1..n` per block (rank `n` for `n = 1`).
pub fn random_projection(rng: &mut PgcRng, alg: &MultiMatrixAlgebra) -> Element {
    let blocks = alg
        .sizes()
        .iter()
        .map(|&n| {
            let k = if n == 1 { rng.gen_range(0..=1) } else { rng.gen_range(1..n) };
            let u = haar_unitary(rng, n);
            let v = u.columns(0, k).into_owned();
            &v * v.adjoint()
        })
        .collect();
    Element { blocks }
}

/// Random positive element `a a^*`.
pub fn random_positive(rng: &mut PgcRng, alg: &MultiMatrixAlgebra) -> Element {
    let a = gaussian_element(rng, alg);
    &a * &a.adjoint()
}

pub fn uniform(rng: &mut PgcRng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

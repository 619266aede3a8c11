//! Structural invariants over seeded random draws on D₃ ⊆ M₃ and C ⊆ M₃.

use pgc_core::channel::BimoduleChannel;
use pgc_core::harness::generate::random_cpb_channel;
use pgc_core::linalg;
use pgc_core::qfa::{Side, TwoBoxElement, TwoBoxSpaces};
use pgc_core::rng;
use pgc_core::tower::{Inclusion, JonesTower, TowerOptions};
use proptest::prelude::*;
use std::sync::{Arc, OnceLock};

fn towers() -> &'static [Arc<TwoBoxSpaces>] {
    static S: OnceLock<Vec<Arc<TwoBoxSpaces>>> = OnceLock::new();
    S.get_or_init(|| {
        [Inclusion::diagonal_in_full(3), Inclusion::scalars_in_full(3)]
            .into_iter()
            .map(|i| Arc::new(TwoBoxSpaces::new(JonesTower::build(i, TowerOptions::default()).unwrap()).unwrap()))
            .collect()
    })
}

fn random_coords(s: &TwoBoxSpaces, side: Side, seed: u64) -> TwoBoxElement {
    let mut r = rng::stream(seed, 1);
    s.from_coords(side, &rng::gaussian_matrix(&mut r, s.dim(), 1).column(0).into_owned())
}

fn random_positive_minus(s: &TwoBoxSpaces, seed: u64, stream: u64) -> TwoBoxElement {
    let mut r = rng::stream(seed, stream);
    let rc = s.relative_commutant(Side::Minus);
    TwoBoxElement::minus(rc.to_big(&rng::random_positive(&mut r, &rc.algebra), s.tower.m2()))
}

/// The bimodule map with multiplier `h`.
fn with_multiplier(s: &Arc<TwoBoxSpaces>, h: &TwoBoxElement) -> BimoduleChannel {
    let y = s.rotate180(&s.fourier_inv(h).unwrap()).scale_re(1.0 / s.mu());
    BimoduleChannel::from_y(s, &y).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn fourier_is_unitary(seed in any::<u64>(), which in 0usize..2) {
        let s = &towers()[which];
        let x = random_coords(s, Side::Plus, seed);
        let fx = s.fourier(&x).unwrap();
        prop_assert!((s.norm2(&fx) - s.norm2(&x)).abs() < 1e-10 * s.norm2(&x));
        let back = s.fourier_inv(&fx).unwrap();
        prop_assert!(back.value.dist(&x.value) < 1e-10 * x.value.frob());
    }

    #[test]
    fn convolution_of_positives_is_positive(seed in any::<u64>(), which in 0usize..2) {
        let s = &towers()[which];
        let (a, b) = (random_positive_minus(s, seed, 2), random_positive_minus(s, seed, 3));
        let c = s.convolve(&a, &b).unwrap();
        prop_assert!(c.value.hermitian_part().min_eig() >= -1e-9 * a.norm_inf() * b.norm_inf());
    }

    #[test]
    fn cp_iff_multiplier_positive(seed in any::<u64>(), which in 0usize..2, shift in 0.0f64..0.3) {
        let s = &towers()[which];
        let h = random_positive_minus(s, seed, 4);
        let h = h.sub(&s.one(Side::Minus).scale_re(shift * h.norm_inf())).unwrap();
        let ch = with_multiplier(s, &h);
        let (hat, choi) = (ch.hat_margin(), ch.choi_margin());
        prop_assume!(hat.abs() > 1e-9 && choi.abs() > 1e-9);
        prop_assert_eq!(hat > 0.0, choi > 0.0);
    }

    #[test]
    fn channel_and_multiplier_share_spectrum(seed in any::<u64>(), which in 0usize..2) {
        let s = &towers()[which];
        let ch = random_cpb_channel(s, seed).unwrap();
        let d = linalg::hausdorff(&ch.y.value.eigenvalues(), &linalg::eigenvalues(&ch.action));
        prop_assert!(d < 1e-8);
    }

    #[test]
    fn unitalized_draws_are_unital_cp(seed in any::<u64>(), which in 0usize..2) {
        let s = &towers()[which];
        let ch = random_cpb_channel(s, seed).unwrap();
        prop_assert!(ch.is_cp() && ch.is_unital);
        let one = s.tower.m().one();
        prop_assert!(ch.apply(&one).dist(&one) < 1e-9);
    }

    #[test]
    fn pimsner_popa_inequality(seed in any::<u64>(), which in 0usize..2) {
        let s = &towers()[which];
        let t = &s.tower;
        let mut r = rng::stream(seed, 5);
        let x = rng::random_positive(&mut r, t.m());
        let en = t.n_to_m(&t.e_n(&x).unwrap());
        let gap = &en - &x.scale_re(1.0 / t.mu);
        prop_assert!(gap.hermitian_part().min_eig() >= -1e-9 * x.norm_inf());
    }
}

//! Built-in instance families with their analytic ground truth.

use super::instance::{
    from_cmat, from_element, ChannelSpec, EmbeddingSpec, Expected, GeneratorParams, InstanceSpec, TraceSpec,
    SCHEMA_VERSION,
};
use super::HarnessError;
use crate::algebra_core::{root_of_unity, Element, MultiMatrixAlgebra};
use crate::channel::BimoduleChannel;
use crate::linalg::{cr, zeros};
use crate::qfa::{Side, TwoBoxElement, TwoBoxSpaces};
use crate::rng;
use crate::spectral::Tolerances;
use crate::tower::{Inclusion, JonesTower, TowerOptions};
use std::sync::Arc;

/// Registry entry: the inclusion a family lives on and what analysis must find.
#[derive(Debug, Clone, Copy)]
pub struct Family {
    pub name: &'static str,
    pub params: &'static str,
    pub inclusion: &'static str,
    pub ground_truth: &'static str,
}

pub const FAMILIES: &[Family] = &[
    Family {
        name: "ad_unitary",
        params: "n >= 2",
        inclusion: "D_n in M_n",
        ground_truth: "Ad(diag(w^j)), w = e^{2 pi i/n}: phase group Z_n, fixed algebra D_n = N",
    },
    Family {
        name: "expectation_mix",
        params: "t in [0, 1], n >= 2 (default 3)",
        inclusion: "D_n in M_n",
        ground_truth: "(1-t) id + t E_N: phase group {1}; fixed algebra N for t > 0, M for t = 0",
    },
    Family {
        name: "shift_conjugation",
        params: "n >= 2",
        inclusion: "C in M_n",
        ground_truth: "Ad(S), S the cyclic shift: phase group Z_n, fixed algebra span{S^k}, abelian of dim n",
    },
    Family {
        name: "shift_mixture",
        params: "n >= 2",
        inclusion: "C in M_n",
        ground_truth: "(Ad(S) + Ad(SD))/2, D = diag(w^j): irreducible, phase group Z_n with eigenvectors D^k",
    },
    Family {
        name: "scalars_in_full",
        params: "n >= 2",
        inclusion: "C in M_n",
        ground_truth: "the trace channel E_C: phase group {1}, fixed algebra C = N",
    },
    Family {
        name: "random_cpb",
        params: "inclusion in {diagonal_in_full, scalars_in_full} (default diagonal_in_full), n >= 2 (default 3)",
        inclusion: "per params",
        ground_truth: "random Fourier-positive multiplier, unitalized: completely positive and unital",
    },
];

pub fn family(name: &str) -> Option<&'static Family> {
    FAMILIES.iter().find(|f| f.name == name)
}

const DEFAULT_N: usize = 3;

pub fn check_params(name: &str, p: &GeneratorParams) -> Result<(), String> {
    if let Some(n) = p.n {
        if n < 2 {
            return Err(format!("{name}: n must be at least 2, got {n}"));
        }
    }
    match name {
        "expectation_mix" => match p.t {
            Some(t) if (0.0..=1.0).contains(&t) => {}
            Some(t) => return Err(format!("expectation_mix: t must lie in [0, 1], got {t}")),
            None => return Err("expectation_mix: parameter t is required".into()),
        },
        _ if p.t.is_some() => return Err(format!("{name}: parameter t is not used")),
        _ => {}
    }
    match (name, p.inclusion.as_deref()) {
        ("random_cpb", None | Some("diagonal_in_full") | Some("scalars_in_full")) => {}
        ("random_cpb", Some(other)) => return Err(format!("random_cpb: unsupported inclusion {other}")),
        (_, Some(_)) => return Err(format!("{name}: parameter inclusion is not used")),
        _ => {}
    }
    Ok(())
}

fn diag_phases(n: usize) -> Element {
    let mut d = zeros(n, n);
    for j in 0..n {
        d[(j, j)] = root_of_unity(j as i64, n);
    }
    Element { blocks: vec![d] }
}

fn shift(n: usize) -> Element {
    let mut s = zeros(n, n);
    for j in 0..n {
        s[((j + 1) % n, j)] = cr(1.0);
    }
    Element { blocks: vec![s] }
}

/// Kraus operators of the deterministic families on `M_n`.
fn kraus_family(name: &str, n: usize, t: Option<f64>) -> Option<Vec<Element>> {
    let m = MultiMatrixAlgebra::full(n);
    let ks = match name {
        "ad_unitary" => vec![diag_phases(n)],
        "expectation_mix" => {
            let t = t.unwrap_or(0.5);
            let mut ks = vec![m.one().scale_re((1.0 - t).sqrt())];
            ks.extend((0..n).map(|j| m.unit(0, j, j).scale_re(t.sqrt())));
            ks
        }
        "shift_conjugation" => vec![shift(n)],
        "shift_mixture" => {
            let s = shift(n);
            let sd = &s * &diag_phases(n);
            vec![s.scale_re(0.5f64.sqrt()), sd.scale_re(0.5f64.sqrt())]
        }
        "scalars_in_full" => m.units().into_iter().map(|(i, k, l)| m.unit(i, k, l).scale_re(1.0 / (n as f64).sqrt())).collect(),
        _ => return None,
    };
    Some(ks.into_iter().filter(|k| k.frob() > 0.0).collect())
}

/// Random Fourier-positive multiplier `h ≥ 0`, turned into `y = σ(F⁻¹(h))/μ` so that
/// `Φ̂ = h`, then unitalized.
pub fn random_cpb_channel(spaces: &Arc<TwoBoxSpaces>, seed: u64) -> Result<BimoduleChannel, HarnessError> {
    let mut r = rng::stream(seed, 0xc9b);
    let rc = spaces.relative_commutant(Side::Minus);
    let h = rc.to_big(&rng::random_positive(&mut r, &rc.algebra), spaces.tower.m2());
    let y = spaces.rotate180(&spaces.fourier_inv(&TwoBoxElement::minus(h))?).scale_re(1.0 / spaces.mu());
    let ch = BimoduleChannel::from_y(spaces, &y)?.unitalize()?;
    if !ch.is_cp() || !ch.is_unital {
        return Err(HarnessError::BadParams("random_cpb: unitalized draw is not a unital CP map".into()));
    }
    Ok(ch)
}

/// Explicit channel data for a family over the given tower; `M` must be a single full block.
pub fn channel_on(name: &str, p: &GeneratorParams, spaces: &Arc<TwoBoxSpaces>, seed: u64) -> Result<ChannelSpec, HarnessError> {
    if family(name).is_none() {
        return Err(HarnessError::UnknownGenerator(name.into()));
    }
    check_params(name, p).map_err(HarnessError::BadParams)?;
    if name == "random_cpb" {
        let ch = random_cpb_channel(spaces, seed)?;
        return Ok(ChannelSpec::YElement { operator: from_cmat(&ch.action) });
    }
    let sizes = spaces.tower.m().sizes();
    if sizes.len() != 1 {
        return Err(HarnessError::BadParams(format!("{name}: needs M to be a single full matrix block")));
    }
    let n = sizes[0];
    if p.n.is_some_and(|k| k != n) {
        return Err(HarnessError::BadParams(format!("{name}: n = {} does not match M = M_{n}", p.n.unwrap())));
    }
    let ks = kraus_family(name, n, p.t).expect("registered family");
    Ok(ChannelSpec::Kraus { operators: ks.iter().map(from_element).collect() })
}

fn expected(name: &str, n: usize, t: Option<f64>) -> Expected {
    let e = |m: usize, dim: usize, eq: bool| Expected {
        phase_group_order: Some(m),
        fixed_algebra_dim: Some(dim),
        fixed_equals_n: Some(eq),
        is_cp: Some(true),
        is_unital: Some(true),
    };
    match name {
        "ad_unitary" => e(n, n, true),
        "expectation_mix" if t == Some(0.0) => e(1, n * n, false),
        "expectation_mix" => e(1, n, true),
        "shift_conjugation" => e(n, n, false),
        "shift_mixture" => e(n, 1, true),
        "scalars_in_full" => e(1, 1, true),
        _ => Expected { is_cp: Some(true), is_unital: Some(true), ..Expected::default() },
    }
}

/// Instance document for a registered family.
pub fn generate(name: &str, p: &GeneratorParams, seed: u64) -> Result<InstanceSpec, HarnessError> {
    if family(name).is_none() {
        return Err(HarnessError::UnknownGenerator(name.into()));
    }
    check_params(name, p).map_err(HarnessError::BadParams)?;
    let n = p.n.unwrap_or(DEFAULT_N);
    let diagonal = match name {
        "ad_unitary" | "expectation_mix" => true,
        "random_cpb" => p.inclusion.as_deref() != Some("scalars_in_full"),
        _ => false,
    };
    let (algebra_n, embedding) =
        if diagonal { (vec![1; n], EmbeddingSpec::DiagonalInFull) } else { (vec![1], EmbeddingSpec::ScalarsInFull) };
    let channel = if name == "random_cpb" {
        let incl = if diagonal { Inclusion::diagonal_in_full(n) } else { Inclusion::scalars_in_full(n) };
        let spaces = Arc::new(TwoBoxSpaces::new(JonesTower::build(incl, TowerOptions::default())?)?);
        channel_on(name, p, &spaces, seed)?
    } else {
        let ks = kraus_family(name, n, p.t).expect("registered family");
        ChannelSpec::Kraus { operators: ks.iter().map(from_element).collect() }
    };
    Ok(InstanceSpec {
        schema_version: SCHEMA_VERSION,
        algebra_n,
        algebra_m: vec![n],
        embedding,
        trace: TraceSpec::Markov,
        channel,
        tolerances: Tolerances::default(),
        seed,
        expected: Some(expected(name, n, p.t)),
    })
}

//! Bimodule quantum channels held in synchronized representations: the action on
//! `L²(M)`, the implementing element `y_Φ ∈ N′∩M₁`, the multiplier `Φ̂ ∈ M′∩M₂`, and
//! optional Kraus data.

use crate::algebra_core::{Element, MultiMatrixAlgebra};
use crate::linalg::{self, cr, CMat};
use crate::qfa::{QfaError, Side, TwoBoxElement, TwoBoxSpaces};
use crate::tower::TowerError;
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("map is not N-bimodular (relative residual {residual:e})")]
    NotBimodular { residual: f64 },
    #[error("map does not send M into M (residual {residual:e})")]
    DoesNotPreserveM { residual: f64 },
    #[error("spanning set M e1 M has rank {rank}, expected {expected}")]
    SpanningSetDeficient { rank: usize, expected: usize },
    #[error("Choi oracle and multiplier positivity disagree (multiplier {hat_min:e}, Choi {choi_min:e})")]
    OracleDisagreement { hat_min: f64, choi_min: f64 },
    #[error("channels live over different towers")]
    TowerMismatch,
    #[error("Φ(1) is not invertible (min eigenvalue {min_eig:e})")]
    SingularUnit { min_eig: f64 },
    #[error("map is not completely positive")]
    NotCP,
    #[error("representation residual {name} = {value:e} exceeds tolerance")]
    Incoherent { name: String, value: f64 },
    #[error(transparent)]
    Qfa(#[from] QfaError),
    #[error(transparent)]
    Tower(#[from] TowerError),
}

pub const BIMODULAR_TOL: f64 = 1e-8;
pub const CP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpVerdict {
    pub is_cp: bool,
    /// `λ_min(Φ̂) / ‖Φ̂‖`.
    pub hat_margin: f64,
    /// `λ_min(Choi) / ‖Choi‖`.
    pub choi_margin: f64,
}

#[derive(Debug, Clone)]
pub struct BimoduleChannel {
    spaces: Arc<TwoBoxSpaces>,
    /// Matrix of `Φ` on the GNS coordinates of `M`.
    pub action: CMat,
    pub y: TwoBoxElement,
    /// `Φ̂` in the channel normalization (`id ↦ μ^{3/2}e₂`, `E_N ↦ μ^{1/2}1`).
    pub hat: TwoBoxElement,
    pub kraus: Option<Vec<Element>>,
    pub cp: CpVerdict,
    pub is_unital: bool,
    pub is_trace_preserving: bool,
    pub bimodularity_residual: f64,
    /// Cross-representation residuals, by name.
    pub residuals: BTreeMap<String, f64>,
}

impl BimoduleChannel {
    pub fn spaces(&self) -> &Arc<TwoBoxSpaces> {
        &self.spaces
    }

    fn m(&self) -> &MultiMatrixAlgebra {
        self.spaces.tower.m()
    }

    /// Builds every representation from the action matrix.
    pub fn from_action(spaces: &Arc<TwoBoxSpaces>, action: CMat) -> Result<Self, ChannelError> {
        let tower = &spaces.tower;
        let gns = tower.gns_m();
        let scale = linalg::op_norm(&action).max(1e-300);
        let mut bimod: f64 = 0.0;
        for (i, k, l) in tower.n().units() {
            let u = tower.n_to_m(&tower.n().unit(i, k, l));
            let lu = gns.left(&u);
            let ru = gns.right(&u);
            bimod = bimod.max(linalg::op_norm(&(&action * &lu - &lu * &action)));
            bimod = bimod.max(linalg::op_norm(&(&action * &ru - &ru * &action)));
        }
        bimod /= scale;
        if bimod > BIMODULAR_TOL {
            return Err(ChannelError::NotBimodular { residual: bimod });
        }
        let (y_raw, dist_m1) = tower.m1_from_operator(&action);
        let y = spaces.project(Side::Plus, &y_raw);
        let mut residuals = BTreeMap::new();
        residuals.insert("y_in_m1".to_string(), dist_m1 / scale);
        residuals.insert("y_in_relative_commutant".to_string(), y.value.dist(&y_raw) / y_raw.frob().max(1e-300));
        let mut ch = BimoduleChannel {
            spaces: spaces.clone(),
            y,
            hat: spaces.zero(Side::Minus),
            action,
            kraus: None,
            cp: CpVerdict { is_cp: false, hat_margin: 0.0, choi_margin: 0.0 },
            is_unital: false,
            is_trace_preserving: false,
            bimodularity_residual: bimod,
            residuals,
        };
        let (hat, fit) = ch.fourier_multiplier()?;
        ch.hat = hat;
        ch.residuals.extend(fit);
        ch.cross_check()?;
        ch.cp = ch.cp_verdict()?;
        let m = ch.m().clone();
        ch.is_unital = ch.apply(&m.one()).dist(&m.one()) < 1e-9;
        ch.is_trace_preserving = ch.adjoint_apply(&m.one()).dist(&m.one()) < 1e-9;
        Ok(ch)
    }

    /// `Θ_y(x) = μ E_M(y x e₁)`.
    pub fn from_y(spaces: &Arc<TwoBoxSpaces>, y: &TwoBoxElement) -> Result<Self, ChannelError> {
        if y.side != Side::Plus {
            return Err(QfaError::WrongSide.into());
        }
        let a = spaces.tower.m1_operator(&y.value);
        Self::from_action(spaces, a)
    }

    /// `x ↦ Σ K x K^*` with `K ∈ M`.
    pub fn from_kraus(spaces: &Arc<TwoBoxSpaces>, ks: &[Element]) -> Result<Self, ChannelError> {
        let gns = spaces.tower.gns_m();
        let d = gns.dim();
        let mut a = linalg::zeros(d, d);
        for k in ks {
            if !spaces.tower.m().owns(k) {
                return Err(ChannelError::DoesNotPreserveM { residual: f64::INFINITY });
            }
            a += gns.left(k) * gns.right(&k.adjoint());
        }
        let mut ch = Self::from_action(spaces, a)?;
        ch.kraus = Some(ks.to_vec());
        Ok(ch)
    }

    /// `x ↦ Σ K L(x) K^*` for operators `K` on `L²(M)`; the result must lie in `L(M)`.
    pub fn from_kraus_operators(spaces: &Arc<TwoBoxSpaces>, ks: &[CMat]) -> Result<Self, ChannelError> {
        let gns = spaces.tower.gns_m();
        let m = spaces.tower.m();
        let d = gns.dim();
        let omega = gns.vec(&m.one());
        let mut a = linalg::zeros(d, d);
        let mut worst: f64 = 0.0;
        for (i, k, l) in m.units() {
            let j = gns.index(i, k, l);
            let u = m.unit(i, k, l).scale_re(1.0 / m.weights()[i].sqrt());
            let lu = gns.left(&u);
            let mut z = linalg::zeros(d, d);
            for kk in ks {
                if kk.nrows() != d || kk.ncols() != d {
                    return Err(ChannelError::DoesNotPreserveM { residual: f64::INFINITY });
                }
                z += kk * &lu * kk.adjoint();
            }
            let x = gns.unvec(&(&z * &omega));
            worst = worst.max(linalg::op_norm(&(gns.left(&x) - &z)) / linalg::op_norm(&z).max(1.0));
            a.set_column(j, &gns.vec(&x));
        }
        if worst > BIMODULAR_TOL {
            return Err(ChannelError::DoesNotPreserveM { residual: worst });
        }
        Self::from_action(spaces, a)
    }

    pub fn identity(spaces: &Arc<TwoBoxSpaces>) -> Result<Self, ChannelError> {
        let d = spaces.tower.gns_m().dim();
        Self::from_action(spaces, linalg::eye(d))
    }

    /// `E_N = Θ_{e₁}`.
    pub fn expectation(spaces: &Arc<TwoBoxSpaces>) -> Result<Self, ChannelError> {
        Self::from_y(spaces, &spaces.e1())
    }

    /// `Ad(u)`, for `u ∈ M` commuting with `N`.
    pub fn ad(spaces: &Arc<TwoBoxSpaces>, u: &Element) -> Result<Self, ChannelError> {
        Self::from_kraus(spaces, std::slice::from_ref(u))
    }

    pub fn apply(&self, x: &Element) -> Element {
        let gns = self.spaces.tower.gns_m();
        gns.unvec(&(&self.action * gns.vec(x)))
    }

    /// `Φ^*` with respect to `τ`; agrees with the Hilbert adjoint on `L²(M)`.
    pub fn adjoint_apply(&self, x: &Element) -> Element {
        let gns = self.spaces.tower.gns_m();
        gns.unvec(&(self.action.adjoint() * gns.vec(x)))
    }

    /// `Φ̂` from `Φ̂ x e₁ y Ω₁ = μ^{1/2} Σ_j x η_j^* e₁ Φ(η_j) y Ω₁`, solved on the spanning set.
    fn fourier_multiplier(&self) -> Result<(TwoBoxElement, BTreeMap<String, f64>), ChannelError> {
        let t = &self.spaces.tower;
        let m = t.m();
        let gns1 = t.gns_m1();
        let etas = t.pp_basis()?;
        let e1 = t.e1();
        let phis: Vec<(Element, Element)> =
            etas.iter().map(|eta| (t.m_to_m1(&eta.adjoint()), t.m_to_m1(&self.apply(eta)))).collect();
        let span = self.spaces.spanning_set().map_err(|(rank, expected)| ChannelError::SpanningSetDeficient { rank, expected })?;
        let um: Vec<Element> = m.units().into_iter().map(|(i, k, l)| t.m_to_m1(&m.unit(i, k, l))).collect();
        let n = um.len();
        let d1 = gns1.dim();
        let sq = t.mu.sqrt();
        // W[:, a·n + b] = √μ Σ_s (x_a η_s^* e₁)(Φ(η_s) x_b) Ω₁: per block of M₁ the double sum is
        // one product of the row-stacked left factors with the column-stacked right factors
        let s_count = phis.len();
        let mut w = linalg::zeros(d1, n * n);
        for (j, &r) in t.m1().sizes().iter().enumerate() {
            let mut lm = linalg::zeros(n * r, s_count * r);
            let mut rm = linalg::zeros(s_count * r, n * r);
            for (a, x) in um.iter().enumerate() {
                for (s, (es, pe)) in phis.iter().enumerate() {
                    lm.view_mut((a * r, s * r), (r, r)).copy_from(&(&(x * es) * e1).blocks[j]);
                    rm.view_mut((s * r, a * r), (r, r)).copy_from(&(pe * x).blocks[j]);
                }
            }
            let prod = linalg::mm(&lm, &rm);
            let scale = cr(sq * t.m1().weights()[j].sqrt());
            for a in 0..n {
                for b in 0..n {
                    for k in 0..r {
                        for l in 0..r {
                            w[(gns1.index(j, k, l), a * n + b)] = prod[(a * r + k, b * r + l)] * scale;
                        }
                    }
                }
            }
        }
        let v = &span.v;
        let op = linalg::mm(&w, &span.pinv);
        let fit = (linalg::mm(&op, v) - &w).norm() / w.norm().max(1.0);
        let (h, dist) = t.m2_from_operator(&op);
        let hat = self.spaces.project(Side::Minus, &h);
        let mut r = BTreeMap::new();
        r.insert("hat_linear_fit".into(), fit);
        // RMS singular value ≤ ‖op‖, so this normalization only overstates the residual
        let rms = op.norm() / (d1 as f64).sqrt();
        r.insert("hat_in_m2".into(), dist / rms.max(1.0));
        r.insert("hat_in_relative_commutant".into(), hat.value.dist(&h) / h.frob().max(1.0));
        Ok((hat, r))
    }

    /// Action from `Θ_y`, from `μ^{3/2}E_M(e₂e₁Φ̂xe₁e₂)`, and `Φ̂ = μ F(σ(y))`, all compared on a basis.
    fn cross_check(&mut self) -> Result<(), ChannelError> {
        let t = &self.spaces.tower;
        let m = t.m();
        let mu = t.mu;
        let e1 = t.e1();
        let e1_2 = t.m1_to_m2(e1);
        let e2 = t.e2();
        let scale = linalg::op_norm(&self.action).max(1.0);
        let mut theta: f64 = 0.0;
        let mut rot: f64 = 0.0;
        for (i, k, l) in m.units() {
            let x = m.unit(i, k, l);
            let direct = self.apply(&x);
            let th = t.e_m(&(&(&self.y.value * &t.m_to_m1(&x)) * e1))?.scale_re(mu);
            theta = theta.max(th.dist(&direct));
            let x2 = t.m1_to_m2(&t.m_to_m1(&x));
            let z = &(&(&(&(e2 * &e1_2) * &self.hat.value) * &x2) * &e1_2) * e2;
            let back = t.e_m(&t.e_m1(&z)?)?.scale_re(mu.powf(1.5));
            rot = rot.max(back.dist(&direct));
        }
        let fy = self.spaces.fourier_opposite(&self.y)?.scale_re(mu);
        let hat_vs_f = fy.value.dist(&self.hat.value) / self.hat.value.frob().max(1.0);
        self.residuals.insert("theta_y_action".into(), theta / scale);
        self.residuals.insert("rotation_formula_action".into(), rot / scale);
        self.residuals.insert("hat_vs_mu_opposite_fourier_y".into(), hat_vs_f);
        for (name, &v) in &self.residuals {
            if v > 1e-8 {
                return Err(ChannelError::Incoherent { name: name.clone(), value: v });
            }
        }
        Ok(())
    }

    /// Smallest eigenvalue of the Choi matrices `Σ e_{kl} ⊗ Φ(e_{kl})_j` over all block pairs,
    /// relative to the largest norm.
    pub fn choi_margin(&self) -> f64 {
        let m = self.m();
        let mut min_eig = f64::INFINITY;
        let mut norm: f64 = 0.0;
        for (i, bi) in m.blocks().iter().enumerate() {
            let n = bi.size;
            let images: Vec<Vec<Element>> =
                (0..n).map(|k| (0..n).map(|l| self.apply(&m.unit(i, k, l))).collect()).collect();
            for (j, bj) in m.blocks().iter().enumerate() {
                let s = bj.size;
                let mut c = linalg::zeros(n * s, n * s);
                for k in 0..n {
                    for l in 0..n {
                        let blk = &images[k][l].blocks[j];
                        c.view_mut((k * s, l * s), (s, s)).copy_from(blk);
                    }
                }
                let h = linalg::hermitian_part(&c);
                min_eig = min_eig.min(linalg::min_herm_eig(&h));
                norm = norm.max(linalg::op_norm(&h));
            }
        }
        if norm == 0.0 {
            0.0
        } else {
            min_eig / norm
        }
    }

    /// `λ_min(Φ̂)/‖Φ̂‖`.
    pub fn hat_margin(&self) -> f64 {
        let n = self.hat.norm_inf();
        if n == 0.0 {
            return 0.0;
        }
        let h = self.hat.value.hermitian_part();
        h.min_eig() / n
    }

    fn cp_verdict(&self) -> Result<CpVerdict, ChannelError> {
        let hat_margin = self.hat_margin();
        let choi_margin = self.choi_margin();
        let herm = self.hat.value.dist(&self.hat.value.adjoint()) <= CP_TOL * self.hat.norm_inf().max(1.0);
        let by_hat = herm && hat_margin >= -CP_TOL;
        let by_choi = choi_margin >= -CP_TOL;
        if by_hat != by_choi {
            return Err(ChannelError::OracleDisagreement { hat_min: hat_margin, choi_min: choi_margin });
        }
        Ok(CpVerdict { is_cp: by_hat, hat_margin, choi_margin })
    }

    pub fn is_cp(&self) -> bool {
        self.cp.is_cp
    }

    fn same_tower(&self, o: &Self) -> Result<(), ChannelError> {
        if Arc::ptr_eq(&self.spaces, &o.spaces) {
            Ok(())
        } else {
            Err(ChannelError::TowerMismatch)
        }
    }

    /// `Φ₁Φ₂ = Θ_{y₁y₂}`.
    pub fn compose(&self, o: &Self) -> Result<Self, ChannelError> {
        self.same_tower(o)?;
        Self::from_action(&self.spaces, &self.action * &o.action)
    }

    /// `Φ^* = Θ_{y^*}`.
    pub fn adjoint(&self) -> Result<Self, ChannelError> {
        Self::from_action(&self.spaces, self.action.adjoint())
    }

    /// `Φ₁ ⋆ Φ₂ = Θ_{y₁∗y₂}`.
    pub fn star(&self, o: &Self) -> Result<Self, ChannelError> {
        self.same_tower(o)?;
        let y = self.spaces.convolve(&self.y, &o.y)?;
        Self::from_y(&self.spaces, &y)
    }

    pub fn scale(&self, s: f64) -> Result<Self, ChannelError> {
        Self::from_action(&self.spaces, &self.action * cr(s))
    }

    pub fn add(&self, o: &Self) -> Result<Self, ChannelError> {
        self.same_tower(o)?;
        Self::from_action(&self.spaces, &self.action + &o.action)
    }

    /// `x ↦ a^{-1/2} Φ(x) a^{-1/2}` with `a = Φ(1)`.
    pub fn unitalize(&self) -> Result<Self, ChannelError> {
        let m = self.m();
        let a = self.apply(&m.one()).hermitian_part();
        let min_eig = a.min_eig();
        if min_eig <= 1e-8 {
            return Err(ChannelError::SingularUnit { min_eig });
        }
        let b = a.herm_func(|t| 1.0 / t.sqrt());
        let gns = self.spaces.tower.gns_m();
        let act = gns.left(&b) * gns.right(&b) * &self.action;
        let mut out = Self::from_action(&self.spaces, act)?;
        if let Some(ks) = &self.kraus {
            out.kraus = Some(ks.iter().map(|k| &b * k).collect());
        }
        Ok(out)
    }

    /// Pimsner–Popa dominance: `c = ‖(Φ(η_kη_j^*))_{kj}‖`, with the defects of
    /// `Φ̂ ⪯ c·Ê_N` and `‖Φ̂‖ ≤ μ^{1/2}c` (both must be `≤ 1e-9`).
    pub fn pp_dominance(&self) -> Result<PpDominance, ChannelError> {
        if !self.cp.is_cp {
            return Err(ChannelError::NotCP);
        }
        let t = &self.spaces.tower;
        let etas = t.pp_basis()?;
        let k = etas.len();
        let mut c: f64 = 0.0;
        let imgs: Vec<Vec<Element>> =
            etas.iter().map(|a| etas.iter().map(|b| self.apply(&(a * &b.adjoint()))).collect()).collect();
        for (bi, blk) in t.m().blocks().iter().enumerate() {
            let s = blk.size;
            let mut g = linalg::zeros(k * s, k * s);
            for a in 0..k {
                for b in 0..k {
                    g.view_mut((a * s, b * s), (s, s)).copy_from(&imgs[a][b].blocks[bi]);
                }
            }
            c = c.max(linalg::op_norm(&g));
        }
        let sq = t.mu.sqrt();
        let gap = &t.m2().one().scale_re(c * sq) - &self.hat.value;
        let order_defect = (-gap.hermitian_part().min_eig()).max(0.0);
        let norm_defect = (self.hat.norm_inf() - sq * c).max(0.0);
        Ok(PpDominance { c, order_defect, norm_defect, holds: order_defect <= 1e-9 && norm_defect <= 1e-9 })
    }

    /// For CP maps `‖Φ‖_cb = ‖Φ(1)‖`; returns it with the defect of `Φ̂ ⪯ μ‖Φ‖_cb Ê_N`.
    pub fn cb_bound(&self) -> Result<(f64, f64), ChannelError> {
        if !self.cp.is_cp {
            return Err(ChannelError::NotCP);
        }
        let t = &self.spaces.tower;
        let cb = self.apply(&t.m().one()).norm_inf();
        let gap = &t.m2().one().scale_re(t.mu * cb * t.mu.sqrt()) - &self.hat.value;
        Ok((cb, (-gap.hermitian_part().min_eig()).max(0.0)))
    }

    /// `‖Φ̂‖_∞` with the two candidate bounds `μ^{-1/2}‖y‖₁` (literal) and `μ^{1/2}‖y‖₁`
    /// (the form consistent with `Φ̂ = μF(y)` and `‖F(x)‖_∞ ≤ δ⁻¹‖x‖₁`).
    pub fn hausdorff_young(&self) -> HausdorffYoung {
        let mu = self.spaces.mu();
        let n1 = self.spaces.norm1(&self.y);
        let lhs = self.hat.norm_inf();
        HausdorffYoung {
            hat_norm: lhs,
            literal_bound: n1 / mu.sqrt(),
            scaled_bound: n1 * mu.sqrt(),
            literal_holds: lhs <= n1 / mu.sqrt() + 1e-9,
            scaled_holds: lhs <= n1 * mu.sqrt() + 1e-9,
        }
    }

    /// `|τ(Φ(x)y) − τ(xΦ^*(y))|`.
    pub fn adjoint_pairing_defect(&self, adj: &Self, x: &Element, y: &Element) -> f64 {
        let m = self.m();
        let l: Complex64 = m.trace(&(&self.apply(x) * y));
        let r: Complex64 = m.trace(&(x * &adj.apply(y)));
        (l - r).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpDominance {
    pub c: f64,
    pub order_defect: f64,
    pub norm_defect: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HausdorffYoung {
    pub hat_norm: f64,
    pub literal_bound: f64,
    pub scaled_bound: f64,
    pub literal_holds: bool,
    pub scaled_holds: bool,
}

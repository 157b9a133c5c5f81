//! Two-electron functionals on pairs `(z₁, z₂)`: `z₁` (even-cosine) regularizes the
//! outer electron and `z₂` (odd-sine) the inner one.
//!
//! ```text
//! B_av(z₁, z₂) = 2 Σ_i (‖z_i‖²‖z_i'‖² + 1/‖z_i‖²) − ‖z₁‖²‖z₂‖² / (‖z₁²‖²‖z₂‖² − ‖z₂²‖²‖z₁‖²)
//! B_in(z₁, z₂) = 2 Σ_i (‖z_i‖²‖z_i'‖² + 1/‖z_i‖²) − ∫₀¹ dt / (q₁(t) − q₂(t))
//! ```
//!
//! with `q_i = z_i² ∘ τ_{z_i}` the Levi-Civita transforms. `B(s) = (1 − s) B_av + s B_in`
//! joins the mean interaction (`s = 0`) to the instantaneous one (`s = 1`).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::calculus::{chain_gradient, chain_hessian, LoopScalars, ScalarField};
use crate::error::{Error, Result};
use crate::frozen::FD_HESSIAN_STEP;
use crate::jet::Jet;
use crate::levi_civita::inverse_times;
use crate::loops::{Loop, SymmetryClass};
use crate::solve::continuation::{continuation, ContinuationPath, StepPolicy};
use crate::solve::newton::{newton, NewtonOptions};
use crate::solve::objective::{
    directional_check, finite_difference_hessian, gradient_norm, orthonormal_hessian, Objective,
};
use crate::solve::spectrum::{euler_count, SpectrumReport, NULL_TOL};
use crate::solve::{free_fall_seed, frozen_path};

/// Modes per component used by default for pairs.
pub const HELIUM_MODES: usize = 24;
/// Trapezoid points for the instantaneous interaction.
pub const INTERACTION_SAMPLES: usize = 1024;
/// Gaps below this fraction of the largest gap are reported as ill-conditioned.
pub const GAP_WARNING: f64 = 1e-6;

/// `ρ = (√2 − 1)²` and `α = (√2 − 1)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeConstants {
    pub rho: f64,
    pub alpha: f64,
}

impl Default for BridgeConstants {
    fn default() -> Self {
        let s = std::f64::consts::SQRT_2;
        Self {
            rho: (s - 1.0).powi(2),
            alpha: (s - 1.0) / s,
        }
    }
}

impl BridgeConstants {
    /// `|ρ/α − √2(√2 − 1)|`.
    pub fn consistency(&self) -> f64 {
        let s = std::f64::consts::SQRT_2;
        (self.rho / self.alpha - s * (s - 1.0)).abs()
    }
}

/// `(z₁, z₂)` with `z₁` even-cosine and `z₂` odd-sine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PairRecord", into = "PairRecord")]
pub struct PairLoop {
    z1: Loop,
    z2: Loop,
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    z1: Loop,
    z2: Loop,
}

impl TryFrom<PairRecord> for PairLoop {
    type Error = Error;
    fn try_from(r: PairRecord) -> Result<Self> {
        Self::new(r.z1, r.z2)
    }
}

impl From<PairLoop> for PairRecord {
    fn from(p: PairLoop) -> Self {
        Self { z1: p.z1, z2: p.z2 }
    }
}

impl PairLoop {
    pub fn new(z1: Loop, z2: Loop) -> Result<Self> {
        if z1.class() != SymmetryClass::EvenCosine || z2.class() != SymmetryClass::OddSine {
            return Err(Error::ClassMismatch(format!(
                "a pair needs an even-cosine z₁ and an odd-sine z₂, got {:?} and {:?}",
                z1.class(),
                z2.class()
            )));
        }
        Ok(Self { z1, z2 })
    }

    pub fn z1(&self) -> &Loop {
        &self.z1
    }

    pub fn z2(&self) -> &Loop {
        &self.z2
    }

    pub fn dim(&self) -> usize {
        self.z1.modes() + self.z2.modes()
    }

    /// Stacked coefficients `(c¹, c²)`.
    pub fn coeffs(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.z1.coeffs().iter().chain(self.z2.coeffs()).copied(),
        )
    }

    pub fn with_coeffs(&self, x: &DVector<f64>) -> Result<Self> {
        let n1 = self.z1.modes();
        Ok(Self {
            z1: self.z1.with_coeffs(x.rows(0, n1).iter().copied().collect())?,
            z2: self.z2.with_coeffs(x.rows(n1, self.z2.modes()).iter().copied().collect())?,
        })
    }

    /// `‖z₁²‖²‖z₂‖² − ‖z₂²‖²‖z₁‖²`, positive on the mean-admissible set.
    pub fn mean_gap(&self) -> f64 {
        self.z1.square_sq() * self.z2.l2_sq() - self.z2.square_sq() * self.z1.l2_sq()
    }

    pub fn check_mean_admissible(&self) -> Result<()> {
        let (n1, n2) = (self.z1.l2_sq(), self.z2.l2_sq());
        if !(n1 > 1e-12 && n2 > 1e-12) {
            return Err(Error::Domain(format!(
                "both components must be nonzero, got ‖z₁‖² = {n1:.3e}, ‖z₂‖² = {n2:.3e}"
            )));
        }
        let (m1, m2) = (self.z1.square_sq() / n1, self.z2.square_sq() / n2);
        if !(m1 > m2) {
            return Err(Error::Domain(format!(
                "mean admissibility needs ‖z₁²‖²/‖z₁‖² > ‖z₂²‖²/‖z₂‖², got {m1:.6e} ≤ {m2:.6e}"
            )));
        }
        Ok(())
    }
}

fn constant_loop(value: f64, modes: usize) -> Result<Loop> {
    let mut c = vec![0.0; modes.max(1)];
    c[0] = value;
    Loop::new(SymmetryClass::EvenCosine, c)
}

/// `c(z) = α^{-1/2} ‖z²‖/‖z‖`.
pub fn c_of(z: &Loop) -> Result<f64> {
    let n = z.l2_sq();
    if !(n > 1e-12) {
        return Err(Error::Domain(format!("c(z) needs ‖z‖ > 0, got ‖z‖² = {n:.3e}")));
    }
    let alpha = BridgeConstants::default().alpha;
    Ok((z.square_sq() / (alpha * n)).sqrt())
}

/// `(c(z), z)` with the constant first component carrying `modes` coefficients.
pub fn bridge_pair(z: &Loop, modes: usize) -> Result<PairLoop> {
    PairLoop::new(constant_loop(c_of(z)?, modes)?, z.clone())
}

/// Coefficients of `V_i = −z_i'' + a_i z_i + b_i z_i³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvCoeffs {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

pub fn av_coefficients(pair: &PairLoop) -> Result<AvCoeffs> {
    pair.check_mean_admissible()?;
    let (n1, d1, s1) = (pair.z1.l2_sq(), pair.z1.deriv_sq(), pair.z1.square_sq());
    let (n2, d2, s2) = (pair.z2.l2_sq(), pair.z2.deriv_sq(), pair.z2.square_sq());
    let gap2 = pair.mean_gap().powi(2);
    Ok(AvCoeffs {
        a1: d1 / n1 - 1.0 / n1.powi(3) - n2 * n2 * s1 / (2.0 * n1 * gap2),
        b1: n2 * n2 / gap2,
        a2: d2 / n2 - 1.0 / n2.powi(3) + n1 * n1 * s2 / (2.0 * n2 * gap2),
        b2: -n1 * n1 / gap2,
    })
}

/// `−z'' + a z + b z³`, projected onto the basis of `z`.
fn v_loop(z: &Loop, a: f64, b: f64) -> Result<Loop> {
    let m = z.quadrature_len();
    let cubes: Vec<f64> = z.samples_on(m).iter().map(|v| v.powi(3)).collect();
    let proj = crate::calculus::project_samples(z, &cubes);
    let class = z.class();
    let coeffs = z
        .coeffs()
        .iter()
        .enumerate()
        .map(|(k, c)| (class.frequency(k).powi(2) + a) * c + b * proj[k] / class.norm_sq(k))
        .collect();
    z.with_coeffs(coeffs)
}

/// `(V₁, V₂)`; the L² gradient of `B_av` is `(4‖z₁‖² V₁, 4‖z₂‖² V₂)`.
pub fn v_components(pair: &PairLoop) -> Result<(Loop, Loop)> {
    let c = av_coefficients(pair)?;
    Ok((v_loop(&pair.z1, c.a1, c.b1)?, v_loop(&pair.z2, c.a2, c.b2)?))
}

fn av_jet(x: [f64; 6]) -> Jet<6> {
    let [n1, d1, s1, n2, d2, s2] = std::array::from_fn(|i| Jet::variable(i, x[i]));
    let kinetic = 2.0 * (n1 * d1 + n1.recip() + n2 * d2 + n2.recip());
    kinetic - (n1 * n2) / (s1 * n2 - s2 * n1)
}

fn kinetic_jet(x: [f64; 6]) -> Jet<6> {
    let [n1, d1, _, n2, d2, _] = std::array::from_fn(|i| Jet::variable(i, x[i]));
    2.0 * (n1 * d1 + n1.recip() + n2 * d2 + n2.recip())
}

fn pair_fields(pair: &PairLoop, with_hessian: bool) -> ([f64; 6], [ScalarField; 6]) {
    let sc1 = LoopScalars::new(&pair.z1, with_hessian);
    let sc2 = LoopScalars::new(&pair.z2, with_hessian);
    let [f0, f1, f2] = sc1.fields(&pair.z1, 0);
    let [g0, g1, g2] = sc2.fields(&pair.z2, pair.z1.modes());
    (
        [sc1.n, sc1.d, sc1.s, sc2.n, sc2.d, sc2.s],
        [f0, f1, f2, g0, g1, g2],
    )
}

/// A value with its L² gradient split into the two components.
#[derive(Debug, Clone)]
pub struct PairEvaluation {
    pub value: f64,
    pub gradient: (Loop, Loop),
}

fn to_gradient_loops(pair: &PairLoop, g: &DVector<f64>) -> Result<(Loop, Loop)> {
    let n1 = pair.z1.modes();
    let c1 = pair.z1.class();
    let c2 = pair.z2.class();
    let g1 = (0..n1).map(|k| g[k] / c1.norm_sq(k)).collect();
    let g2 = (0..pair.z2.modes()).map(|k| g[n1 + k] / c2.norm_sq(k)).collect();
    Ok((pair.z1.with_coeffs(g1)?, pair.z2.with_coeffs(g2)?))
}

pub fn b_av(pair: &PairLoop) -> Result<PairEvaluation> {
    let f = HeliumFunctional::for_pair(pair, 0.0);
    let x = pair.coeffs();
    let g = f.gradient(&x)?;
    Ok(PairEvaluation {
        value: f.value(&x)?,
        gradient: to_gradient_loops(pair, &g)?,
    })
}

pub fn b_in(pair: &PairLoop) -> Result<PairEvaluation> {
    b_interp(pair, 1.0)
}

/// `(1 − s) B_av + s B_in`.
pub fn b_interp(pair: &PairLoop, s: f64) -> Result<PairEvaluation> {
    let f = HeliumFunctional::for_pair(pair, s);
    let x = pair.coeffs();
    let g = f.gradient(&x)?;
    Ok(PairEvaluation {
        value: f.value(&x)?,
        gradient: to_gradient_loops(pair, &g)?,
    })
}

/// `|F_ρ(z) − B_av(c(z), z)|`.
pub fn bridge_check(z: &Loop) -> Result<f64> {
    let rho = BridgeConstants::default().rho;
    let pair = bridge_pair(z, 1)?;
    Ok((crate::frozen::value(z, rho)? - b_av(&pair)?.value).abs())
}

/// `V₁` at `(c(z), z)` with `a₁, b₁` against `−2/z₁⁶` and `2/z₁⁸`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanishingCheck {
    pub z1: f64,
    pub v1_sup: f64,
    pub a1: f64,
    pub b1: f64,
    pub a1_expected: f64,
    pub b1_expected: f64,
}

impl VanishingCheck {
    /// Largest relative error of `a₁` and `b₁`.
    pub fn coefficient_error(&self) -> f64 {
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
        rel(self.a1, self.a1_expected).max(rel(self.b1, self.b1_expected))
    }
}

pub fn vanishing_check(z: &Loop) -> Result<VanishingCheck> {
    let pair = bridge_pair(z, 1)?;
    let z1 = pair.z1.coeffs()[0];
    let c = av_coefficients(&pair)?;
    let (v1, _) = v_components(&pair)?;
    Ok(VanishingCheck {
        z1,
        v1_sup: v1.coeffs()[0].abs(),
        a1: c.a1,
        b1: c.b1,
        a1_expected: -2.0 / z1.powi(6),
        b1_expected: 2.0 / z1.powi(8),
    })
}

/// `W(z₁) = a₁ z₁ + b₁ z₁³` on constant `z₁`.
fn w_of(z1: f64, n2: f64, s2: f64) -> f64 {
    let p = n2 * z1.powi(4) - s2 * z1 * z1;
    let b1 = n2 * n2 / (p * p);
    let a1 = -1.0 / z1.powi(6) - 0.5 * z1 * z1 * b1;
    a1 * z1 + b1 * z1.powi(3)
}

/// Numerical `D₁W` at `z₁ = c(z)` and the constant `K = X/(‖z‖⁶ z₁¹²)`, `X = P³ z₁⁶ D₁W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct D1wCheck {
    pub k_numeric: f64,
    pub k_expected: f64,
    pub x: f64,
    /// `X < 0`, the sign forced by `K = −2α`.
    pub x_sign_ok: bool,
}

pub fn d1w_check(z: &Loop) -> Result<D1wCheck> {
    let z1 = c_of(z)?;
    let (n2, s2) = (z.l2_sq(), z.square_sq());
    // Richardson-extrapolated central difference.
    let h = 1e-3 * z1;
    let diff = |h: f64| (w_of(z1 + h, n2, s2) - w_of(z1 - h, n2, s2)) / (2.0 * h);
    let dw = (4.0 * diff(h / 2.0) - diff(h)) / 3.0;
    let p = n2 * z1.powi(4) - s2 * z1 * z1;
    let x = p.powi(3) * z1.powi(6) * dw;
    let alpha = BridgeConstants::default().alpha;
    Ok(D1wCheck {
        k_numeric: x / (n2.powi(3) * z1.powi(12)),
        k_expected: -2.0 * alpha,
        x,
        x_sign_ok: x < 0.0,
    })
}

/// One loop sampled at `τ_z(t_j)`.
struct Reparametrized {
    tau: Vec<f64>,
    z: Vec<f64>,
    dz: Vec<f64>,
}

fn reparametrize(z: &Loop, m: usize) -> Result<Reparametrized> {
    let tau = inverse_times(z, m)?;
    let vals = tau.iter().map(|&t| z.eval(t)).collect();
    let dz = tau.iter().map(|&t| z.eval_derivative(t)).collect();
    Ok(Reparametrized { tau, z: vals, dz })
}

/// `∂q(t_j)/∂c_k` for `q = z² ∘ τ_z` at every sample, as an `m × n` matrix.
///
/// With `T(τ) = ‖z‖⁻²∫₀^τ z²` and `A_k(τ) = ∫₀^τ z e_k`,
/// `∂q/∂c_k = 2z e_k − (2z'/z)(2A_k − 2ν_k c_k t)`.
fn q_jacobian(z: &Loop, r: &Reparametrized) -> DMatrix<f64> {
    let class = z.class();
    let n = z.modes();
    let m = r.tau.len();
    let c = z.coeffs();
    let h: Vec<usize> = (0..n).map(|k| class.harmonic(k)).collect();
    let h_max = 2 * h.iter().copied().max().unwrap_or(0);
    let cosine = class.is_cosine(0);
    let mut out = DMatrix::zeros(m, n);
    let mut prim = vec![0.0; h_max + 1];
    for j in 0..m {
        let (tau, zv, dz) = (r.tau[j], r.z[j], r.dz[j]);
        if zv == 0.0 {
            continue;
        }
        let t = j as f64 / m as f64;
        let (s1, c1) = (std::f64::consts::PI * tau).sin_cos();
        let (mut sn, mut cn) = (0.0, 1.0);
        for (mm, p) in prim.iter_mut().enumerate() {
            *p = if mm == 0 {
                tau
            } else {
                sn / (mm as f64 * std::f64::consts::PI)
            };
            let next = cn * c1 - sn * s1;
            sn = sn * c1 + cn * s1;
            cn = next;
        }
        for k in 0..n {
            let mut a = 0.0;
            for (i, ci) in c.iter().enumerate() {
                let diff = prim[h[i].abs_diff(h[k])];
                let sum = prim[h[i] + h[k]];
                a += ci * 0.5 * if cosine { diff + sum } else { diff - sum };
            }
            let ek = class.basis(k, tau);
            out[(j, k)] =
                2.0 * zv * ek - (2.0 * dz / zv) * (2.0 * a - 2.0 * class.norm_sq(k) * c[k] * t);
        }
    }
    out
}

/// Pointwise samples of the two orbits on `t_j = j/m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub t: f64,
    pub q1: f64,
    pub q2: f64,
    pub gap: f64,
}

pub fn pair_samples(pair: &PairLoop, m: usize) -> Result<Vec<PairSample>> {
    let r1 = reparametrize(&pair.z1, m)?;
    let r2 = reparametrize(&pair.z2, m)?;
    Ok((0..m)
        .map(|j| {
            let (q1, q2) = (r1.z[j].powi(2), r2.z[j].powi(2));
            PairSample {
                t: j as f64 / m as f64,
                q1,
                q2,
                gap: q1 - q2,
            }
        })
        .collect())
}

fn check_gaps(gaps: &[f64]) -> Result<()> {
    let max = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (j, min) = gaps
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    if !(min > 0.0) {
        return Err(Error::Domain(format!(
            "the orbits cross: q₁ − q₂ = {min:.3e} at t = {:.6}",
            j as f64 / gaps.len() as f64
        )));
    }
    if min < GAP_WARNING * max {
        log::warn!("near-degenerate interaction gap {min:.3e} (max {max:.3e})");
    }
    Ok(())
}

/// `−(1/m) Σ_j 1/(q₁ − q₂)(t_j)` with its coefficient gradient.
fn interaction(pair: &PairLoop, m: usize, with_gradient: bool) -> Result<(f64, DVector<f64>)> {
    let r1 = reparametrize(&pair.z1, m)?;
    let r2 = reparametrize(&pair.z2, m)?;
    let gaps: Vec<f64> = (0..m).map(|j| r1.z[j].powi(2) - r2.z[j].powi(2)).collect();
    check_gaps(&gaps)?;
    let value = -gaps.iter().map(|g| 1.0 / g).sum::<f64>() / m as f64;
    let mut grad = DVector::zeros(pair.dim());
    if with_gradient {
        let w = DVector::from_iterator(m, gaps.iter().map(|g| 1.0 / (g * g * m as f64)));
        let j1 = q_jacobian(&pair.z1, &r1);
        let j2 = q_jacobian(&pair.z2, &r2);
        let n1 = pair.z1.modes();
        grad.rows_mut(0, n1).copy_from(&j1.tr_mul(&w));
        grad.rows_mut(n1, pair.z2.modes()).copy_from(&(-j2.tr_mul(&w)));
    }
    Ok((value, grad))
}

/// `B(s)` on stacked coefficients.
#[derive(Debug, Clone)]
pub struct HeliumFunctional {
    pub s: f64,
    pub samples: usize,
    template: PairLoop,
}

impl HeliumFunctional {
    pub fn for_pair(pair: &PairLoop, s: f64) -> Self {
        Self {
            s,
            samples: INTERACTION_SAMPLES,
            template: pair.clone(),
        }
    }

    pub fn to_pair(&self, x: &DVector<f64>) -> Result<PairLoop> {
        self.template.with_coeffs(x)
    }

    fn check_s(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.s) {
            return Err(Error::Domain(format!("s must lie in [0, 1], got {}", self.s)));
        }
        Ok(())
    }

    fn jet(&self, x: [f64; 6]) -> Jet<6> {
        if self.s == 0.0 {
            av_jet(x)
        } else if self.s == 1.0 {
            kinetic_jet(x)
        } else {
            (1.0 - self.s) * av_jet(x) + self.s * kinetic_jet(x)
        }
    }

    /// The instantaneous part's Hessian by central differences of its exact gradient.
    fn interaction_hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        struct Part<'a>(&'a HeliumFunctional);
        impl Objective for Part<'_> {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn metric(&self) -> DVector<f64> {
                self.0.metric()
            }
            fn admissible(&self, _: &DVector<f64>) -> Result<()> {
                Ok(())
            }
            fn value(&self, x: &DVector<f64>) -> Result<f64> {
                Ok(interaction(&self.0.to_pair(x)?, self.0.samples, false)?.0)
            }
            fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(interaction(&self.0.to_pair(x)?, self.0.samples, true)?.1)
            }
            fn hessian(&self, _: &DVector<f64>) -> Result<DMatrix<f64>> {
                unreachable!("only the gradient is differenced")
            }
        }
        let h = finite_difference_hessian(&Part(self), x, FD_HESSIAN_STEP)?;
        Ok((&h + h.transpose()) * 0.5)
    }
}

impl Objective for HeliumFunctional {
    fn dim(&self) -> usize {
        self.template.dim()
    }

    fn metric(&self) -> DVector<f64> {
        let (c1, c2) = (self.template.z1.class(), self.template.z2.class());
        let n1 = self.template.z1.modes();
        DVector::from_fn(self.dim(), |k, _| {
            if k < n1 {
                c1.norm_sq(k)
            } else {
                c2.norm_sq(k - n1)
            }
        })
    }

    fn admissible(&self, x: &DVector<f64>) -> Result<()> {
        self.check_s()?;
        let pair = self.to_pair(x)?;
        pair.check_mean_admissible()?;
        if self.s > 0.0 {
            interaction(&pair, self.samples, false)?;
        }
        Ok(())
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.admissible(x)?;
        let pair = self.to_pair(x)?;
        let (vars, _) = pair_fields(&pair, false);
        let mut v = self.jet(vars).v;
        if self.s > 0.0 {
            v += self.s * interaction(&pair, self.samples, false)?.0;
        }
        Ok(v)
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_s()?;
        let pair = self.to_pair(x)?;
        pair.check_mean_admissible()?;
        let (vars, fields) = pair_fields(&pair, false);
        let mut g = chain_gradient(&self.jet(vars), &fields, self.dim());
        if self.s > 0.0 {
            g += interaction(&pair, self.samples, true)?.1 * self.s;
        }
        Ok(g)
    }

    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_s()?;
        let pair = self.to_pair(x)?;
        pair.check_mean_admissible()?;
        let (vars, fields) = pair_fields(&pair, true);
        let mut h = chain_hessian(&self.jet(vars), &fields, self.dim());
        if self.s > 0.0 {
            h += self.interaction_hessian(x)? * self.s;
        }
        Ok(h)
    }
}

/// Lower spectral bound `R = −C − C²/(4δ)` for the Hessian of `B(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HessianBound {
    /// `4 min ‖z_i‖²`.
    pub delta: f64,
    /// Norm of the lower-order part as an operator `H¹ → L²`.
    pub c: f64,
    pub r_bound: f64,
    pub min_eigenvalue: f64,
    pub holds: bool,
}

/// Split the orthonormal Hessian into `P = diag(4‖z_i‖² ω_k²)` and the rest `K`, and
/// bound `‖K v‖ ≤ C (‖v‖ + ‖v'‖)` by `C = ‖K (1 + ω²)^{-1/2}‖₂`.
pub fn hessian_bound(pair: &PairLoop, s: f64) -> Result<HessianBound> {
    let f = HeliumFunctional::for_pair(pair, s);
    let x = pair.coeffs();
    let h = orthonormal_hessian(&f.hessian(&x)?, &f.metric());
    hessian_bound_from(pair, &h)
}

fn hessian_bound_from(pair: &PairLoop, h: &DMatrix<f64>) -> Result<HessianBound> {
    let (n1, n2) = (pair.z1.l2_sq(), pair.z2.l2_sq());
    let m1 = pair.z1.modes();
    let omega: Vec<f64> = (0..pair.dim())
        .map(|k| {
            if k < m1 {
                pair.z1.class().frequency(k)
            } else {
                pair.z2.class().frequency(k - m1)
            }
        })
        .collect();
    let mut k = h.clone();
    for (i, w) in omega.iter().enumerate() {
        let n = if i < m1 { n1 } else { n2 };
        k[(i, i)] -= 4.0 * n * w * w;
    }
    for (j, w) in omega.iter().enumerate() {
        k.column_mut(j).scale_mut(1.0 / (1.0 + w * w).sqrt());
    }
    let c = k.singular_values().max();
    let delta = 4.0 * n1.min(n2);
    let r_bound = -c - c * c / (4.0 * delta);
    let min_eigenvalue = SymmetricEigen::new(h.clone()).eigenvalues.min();
    Ok(HessianBound {
        delta,
        c,
        r_bound,
        min_eigenvalue,
        holds: min_eigenvalue > r_bound,
    })
}

/// A critical pair of `B(s)` with its diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairCert {
    pub s: f64,
    pub value: f64,
    /// L² norm of the gradient.
    pub grad_res: f64,
    pub spectrum: SpectrumReport,
    pub bound: HessianBound,
    /// Signed count of this single critical point.
    pub euler: Option<i64>,
    /// Gradient against a central difference of the value along a fixed direction,
    /// taken at a point displaced from the critical pair so the derivative is not zero.
    pub fd_check: f64,
    /// `max |z₁ − mean z₁|` over the quadrature grid.
    pub z1_deviation: f64,
    pub min_gap: f64,
    pub pair: PairLoop,
}

impl PairCert {
    pub fn evaluate(pair: &PairLoop, s: f64) -> Result<Self> {
        let f = HeliumFunctional::for_pair(pair, s);
        let x = pair.coeffs();
        let metric = f.metric();
        let grad_res = gradient_norm(&f.gradient(&x)?, &metric);
        let h = orthonormal_hessian(&f.hessian(&x)?, &metric);
        let (spectrum, _) = SpectrumReport::from_matrix(&h, NULL_TOL)?;
        let bound = hessian_bound_from(pair, &h)?;
        let direction = DVector::from_fn(x.len(), |k, _| 1.0 / (1.0 + k as f64).powi(2));
        let displaced = &x + &direction * (1e-2 * x.amax());
        let fd_check = directional_check(&f, &displaced, &direction, 1e-5)?;
        let zs = pair.z1.samples_on(pair.z1.quadrature_len());
        let mean = zs.iter().sum::<f64>() / zs.len() as f64;
        let z1_deviation = zs.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        let min_gap = pair_samples(pair, INTERACTION_SAMPLES)?
            .iter()
            .map(|p| p.gap)
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            s,
            value: f.value(&x)?,
            grad_res,
            euler: euler_count(std::slice::from_ref(&spectrum)).ok(),
            spectrum,
            bound,
            fd_check,
            z1_deviation,
            min_gap,
            pair: pair.clone(),
        })
    }

    pub fn certify(pair: &PairLoop, s: f64, tol: f64) -> Result<Self> {
        let cert = Self::evaluate(pair, s)?;
        if !(cert.grad_res < tol) {
            return Err(Error::Precondition(format!(
                "gradient residual {:.3e} exceeds certification tolerance {tol:.1e}",
                cert.grad_res
            )));
        }
        Ok(cert)
    }
}

/// Newton for a critical pair of `B(s)` from `start`.
pub fn solve_pair(start: &PairLoop, s: f64, options: &NewtonOptions) -> Result<PairLoop> {
    let f = HeliumFunctional::for_pair(start, s);
    let report = newton(&f, &start.coeffs(), options)?;
    f.to_pair(&report.x)
}

/// The bridged pair `(c(z_ρ), z_ρ)` at `s = 0`, where `z_ρ` is continued from free fall
/// to `r = ρ` with `modes` odd-sine modes.
pub fn bridged_seed(modes: usize, options: &NewtonOptions) -> Result<PairCert> {
    let seed = free_fall_seed(modes)?;
    let rho = BridgeConstants::default().rho;
    let path = frozen_path(&seed, rho, &StepPolicy::new(0.1, 0.2), options)?.into_result()?;
    let pair = bridge_pair(&path.last().cert.cert.z, modes)?;
    PairCert::certify(&pair, 0.0, 10.0 * options.tol)
}

/// Follow a critical pair of `B(s)` from `start.s` to `s1`.
pub fn pair_path(
    start: &PairCert,
    s1: f64,
    policy: &StepPolicy,
    options: &NewtonOptions,
) -> Result<ContinuationPath<PairCert>> {
    continuation(start.s, s1, start.clone(), policy, |s, prev| {
        let pair = solve_pair(&prev.pair, s, options)?;
        PairCert::certify(&pair, s, 10.0 * options.tol)
    })
}

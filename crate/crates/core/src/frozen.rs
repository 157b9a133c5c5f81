//! The one-loop functional
//!
//! ```text
//! F_r(z) = 2‖z‖²‖z'‖² + 2/‖z‖² + r ‖z‖²/‖z²‖²
//! ```
//!
//! on odd-sine loops. Its critical points solve `z'' + b z + 2a z³ = 0` with
//! `a = r/(2‖z²‖⁴)` and `b = 1/‖z‖⁶ − ‖z'‖²/‖z‖² − r/(2‖z‖²‖z²‖²)`, and their
//! Levi-Civita transforms are frozen-planet orbits of the model with a fixed
//! outer electron.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calculus::{chain_gradient, chain_hessian, project_samples, LoopScalars};
use crate::elliptic;
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::loops::{Loop, SymmetryClass};
use crate::solve::objective::{finite_difference_hessian, gradient_norm, Objective};

/// Certification tolerance on the L² gradient norm.
pub const CERT_TOL: f64 = 1e-9;
/// Largest gradient residual at which the linearized Hessian is meaningful.
pub const LINEARIZATION_TOL: f64 = 1e-8;
/// Step of the finite-difference Hessian.
pub const FD_HESSIAN_STEP: f64 = 1e-6;

/// Coefficients of the critical-point equation `z'' + b z + 2a z³ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrozenCoeffs {
    pub a: f64,
    pub b: f64,
}

fn check_nonzero(z: &Loop) -> Result<()> {
    if z.l2_sq() < 1e-12 {
        return Err(Error::Domain(format!(
            "F_r needs ‖z‖ > 0, got ‖z‖² = {:.3e}",
            z.l2_sq()
        )));
    }
    Ok(())
}

fn check_r(r: f64) -> Result<()> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("r must be finite and nonnegative, got {r}")));
    }
    Ok(())
}

/// `F_r` as a jet in `(‖z‖², ‖z'‖², ‖z²‖²)`.
fn functional_jet(n: f64, d: f64, s: f64, r: f64) -> Jet<3> {
    let n = Jet::variable(0, n);
    let d = Jet::variable(1, d);
    let s = Jet::variable(2, s);
    2.0 * (n * d) + 2.0 * n.recip() + r * (n / s)
}

/// `a` and `b` from the gradient formula, valid at any loop.
pub fn coefficients(z: &Loop, r: f64) -> Result<FrozenCoeffs> {
    check_nonzero(z)?;
    check_r(r)?;
    let (n, d, s) = (z.l2_sq(), z.deriv_sq(), z.square_sq());
    Ok(FrozenCoeffs {
        a: r / (2.0 * s * s),
        b: 1.0 / n.powi(3) - d / n - r / (2.0 * n * s),
    })
}

/// `b = 1/(2‖z‖⁶) − 3r/(4‖z‖²‖z²‖²)`, the form taken at critical points.
pub fn b_at_critical(z: &Loop, r: f64) -> Result<f64> {
    check_nonzero(z)?;
    let (n, s) = (z.l2_sq(), z.square_sq());
    Ok(0.5 / n.powi(3) - 0.75 * r / (n * s))
}

pub fn value(z: &Loop, r: f64) -> Result<f64> {
    check_nonzero(z)?;
    check_r(r)?;
    Ok(functional_jet(z.l2_sq(), z.deriv_sq(), z.square_sq(), r).v)
}

/// The functional as an [`Objective`] on coefficient vectors.
///
/// The symmetric space is odd-sine; the full class is used only to look at the
/// Hessian without the symmetry constraint.
#[derive(Debug, Clone, Copy)]
pub struct FrozenFunctional {
    pub r: f64,
    pub modes: usize,
    pub grid: usize,
    pub class: SymmetryClass,
}

impl FrozenFunctional {
    pub fn new(r: f64, modes: usize, grid: usize) -> Self {
        Self {
            r,
            modes,
            grid,
            class: SymmetryClass::OddSine,
        }
    }

    /// Same functional in the coefficients of the class and size of `z`.
    pub fn for_loop(z: &Loop, r: f64) -> Self {
        Self {
            r,
            modes: z.modes(),
            grid: z.grid_len(),
            class: z.class(),
        }
    }

    pub fn to_loop(&self, x: &DVector<f64>) -> Result<Loop> {
        Loop::with_grid(self.class, x.as_slice().to_vec(), self.grid)
    }

    fn jet_and_scalars(&self, z: &Loop, with_hessian: bool) -> Result<(Jet<3>, LoopScalars)> {
        check_nonzero(z)?;
        check_r(self.r)?;
        let sc = LoopScalars::new(z, with_hessian);
        Ok((functional_jet(sc.n, sc.d, sc.s, self.r), sc))
    }
}

impl Objective for FrozenFunctional {
    fn dim(&self) -> usize {
        self.modes
    }

    fn metric(&self) -> DVector<f64> {
        DVector::from_fn(self.modes, |k, _| self.class.norm_sq(k))
    }

    fn admissible(&self, x: &DVector<f64>) -> Result<()> {
        check_nonzero(&self.to_loop(x)?)
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        value(&self.to_loop(x)?, self.r)
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let z = self.to_loop(x)?;
        let (f, sc) = self.jet_and_scalars(&z, false)?;
        Ok(chain_gradient(&f, &sc.fields(&z, 0), self.modes))
    }

    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let z = self.to_loop(x)?;
        let (f, sc) = self.jet_and_scalars(&z, true)?;
        Ok(chain_hessian(&f, &sc.fields(&z, 0), self.modes))
    }
}

fn coefficient_vector(z: &Loop) -> DVector<f64> {
    DVector::from_column_slice(z.coeffs())
}

fn require_odd_sine(z: &Loop) -> Result<()> {
    if z.class() != SymmetryClass::OddSine {
        return Err(Error::ClassMismatch(format!(
            "F_r is defined on odd-sine loops, got {:?}",
            z.class()
        )));
    }
    Ok(())
}

/// The L² gradient `∇F_r(z)` as a loop.
pub fn gradient(z: &Loop, r: f64) -> Result<Loop> {
    require_odd_sine(z)?;
    let f = FrozenFunctional::for_loop(z, r);
    let g = f.gradient(&coefficient_vector(z))?;
    let metric = f.metric();
    z.with_coeffs(g.component_div(&metric).as_slice().to_vec())
}

/// The gradient assembled from its closed form `−4‖z‖²(z'' + b z + 2a z³)`,
/// Galerkin-projected onto the loop's basis. Agrees with [`gradient`].
pub fn gradient_formula(z: &Loop, r: f64) -> Result<Loop> {
    require_odd_sine(z)?;
    let FrozenCoeffs { a, b } = coefficients(z, r)?;
    let n = z.l2_sq();
    let m = z.quadrature_len();
    let cubes: Vec<f64> = z.samples_on(m).iter().map(|v| v.powi(3)).collect();
    let proj = project_samples(z, &cubes);
    let class = z.class();
    let coeffs = z
        .coeffs()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let w2 = class.frequency(k).powi(2);
            -4.0 * n * (-w2 * c + b * c + 2.0 * a * proj[k] / class.norm_sq(k))
        })
        .collect();
    z.with_coeffs(coeffs)
}

/// L² norm of `∇F_r(z)`.
pub fn gradient_residual(z: &Loop, r: f64) -> Result<f64> {
    require_odd_sine(z)?;
    let f = FrozenFunctional::for_loop(z, r);
    Ok(gradient_norm(&f.gradient(&coefficient_vector(z))?, &f.metric()))
}

/// L² norm of the Galerkin projection of `z'' + b z + 2a z³`.
pub fn ode_residual(z: &Loop, coeffs: FrozenCoeffs) -> f64 {
    let m = z.quadrature_len();
    let cubes: Vec<f64> = z.samples_on(m).iter().map(|v| v.powi(3)).collect();
    let proj = project_samples(z, &cubes);
    let class = z.class();
    z.coeffs()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let nu = class.norm_sq(k);
            let inner = nu * (coeffs.b - class.frequency(k).powi(2)) * c + 2.0 * coeffs.a * proj[k];
            inner * inner / nu
        })
        .sum::<f64>()
        .sqrt()
}

/// How the Hessian is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianMode {
    /// The linearization of the critical-point equation; requires a critical point.
    Linearized,
    /// Central differences of the analytic gradient.
    FiniteDifference,
    /// Exact second derivatives of the discretized functional, valid anywhere.
    Exact,
}

/// Galerkin matrix `⟨e_j, H e_k⟩` of the Hessian in the odd-sine basis.
pub fn hessian(z: &Loop, r: f64, mode: HessianMode) -> Result<DMatrix<f64>> {
    require_odd_sine(z)?;
    let f = FrozenFunctional::for_loop(z, r);
    let x = coefficient_vector(z);
    match mode {
        HessianMode::Exact => f.hessian(&x),
        HessianMode::FiniteDifference => finite_difference_hessian(&f, &x, FD_HESSIAN_STEP),
        HessianMode::Linearized => {
            let residual = gradient_residual(z, r)?;
            if residual >= LINEARIZATION_TOL {
                return Err(Error::Precondition(format!(
                    "linearized Hessian needs a critical point; gradient residual is {residual:.3e}"
                )));
            }
            Ok(linearized_hessian(z, r))
        }
    }
}

/// `ξ ↦ −4‖z‖²(ξ'' + bξ + 6a z²ξ + db(ξ) z + 2 da(ξ) z³)` with
/// `da(ξ) = −4r⟨ξ, z³⟩/‖z²‖⁶` and, at a critical point,
/// `db(ξ) = (−6/‖z‖⁸ + 3r/(‖z‖⁴‖z²‖²)) ⟨ξ, z⟩`.
fn linearized_hessian(z: &Loop, r: f64) -> DMatrix<f64> {
    let sc = LoopScalars::new(z, true);
    let (n, s) = (sc.n, sc.s);
    let a = r / (2.0 * s * s);
    let b = 0.5 / n.powi(3) - 0.75 * r / (n * s);
    let alpha = -6.0 / n.powi(4) + 3.0 * r / (n * n * s);
    let dim = z.modes();
    let z2 = sc.hess_s.as_ref().expect("requested") / 12.0;
    let u = DVector::from_fn(dim, |k, _| sc.metric[k] * z.coeffs()[k]);
    let v = &sc.grad_s / 4.0;
    let mut h = z2 * (-6.0 * a);
    for k in 0..dim {
        h[(k, k)] += sc.metric[k] * (sc.freq_sq[k] - b);
    }
    h.ger(-alpha, &u, &u, 1.0);
    h.ger(8.0 * r / s.powi(3), &v, &v, 1.0);
    h * (4.0 * n)
}

/// Conserved quantity `c = z'² + b z² + a z⁴` of the critical-point equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCheck {
    /// Twice the mean of `z'²/2 + b z²/2 + a z⁴/2`.
    pub c: f64,
    /// Largest deviation of the pointwise value from `c`.
    pub deviation: f64,
}

pub fn energy_check(z: &Loop, r: f64) -> Result<EnergyCheck> {
    let FrozenCoeffs { a, b } = coefficients(z, r)?;
    let m = z.quadrature_len();
    let zs = z.samples_on(m);
    let ds = z.derivative().samples_on(m);
    let pointwise: Vec<f64> = zs
        .iter()
        .zip(&ds)
        .map(|(v, d)| d * d + b * v * v + a * v.powi(4))
        .collect();
    let c = pointwise.iter().sum::<f64>() / m as f64;
    let deviation = pointwise.iter().map(|p| (p - c).abs()).fold(0.0, f64::max);
    Ok(EnergyCheck { c, deviation })
}

/// `v = ‖z‖²/‖z‖₀²` and `w = ‖z‖²‖z‖₀²/‖z²‖²`.
pub fn vw(z: &Loop) -> (f64, f64) {
    let n = z.l2_sq();
    let sup2 = z.sup_norm().powi(2);
    (n / sup2, n * sup2 / z.square_sq())
}

/// Residuals of `v = 2/(4 + 3rw − 2rw²)` and `v = (I₁/I₀)(−rw²/2)`.
pub fn vw_residuals(v: f64, w: f64, r: f64) -> Result<(f64, f64)> {
    let res1 = (v - 2.0 / (4.0 + 3.0 * r * w - 2.0 * r * w * w)).abs();
    let res2 = (v - elliptic::moment_ratio(-r * w * w / 2.0)?).abs();
    Ok((res1, res2))
}

pub fn vw_identity(cert: &CriticalPointCert) -> Result<(f64, f64)> {
    vw_residuals(cert.v, cert.w, cert.r)
}

/// Flip the sign so that `z > 0` on `(0, 1)`; the functional is even in `z`.
pub fn normalize_sign(z: &Loop) -> Result<Loop> {
    if z.eval(0.5) < 0.0 {
        z.with_coeffs(z.coeffs().iter().map(|c| -c).collect())
    } else {
        Ok(z.clone())
    }
}

/// Both sides of the C⁰ bounds `1 ≤ ‖z‖₀ ≤ √(2 + (2r)^{1/3})`.
///
/// Only the upper bound is treated as a check; the lower one is recorded as stated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupBounds {
    pub sup: f64,
    pub upper: f64,
    pub upper_ok: bool,
    pub lower_ok: bool,
}

impl SupBounds {
    pub fn new(sup: f64, r: f64) -> Self {
        let upper = (2.0 + (2.0 * r).cbrt()).sqrt();
        Self {
            sup,
            upper,
            upper_ok: sup <= upper,
            lower_ok: sup >= 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertResiduals {
    /// L² norm of the gradient.
    pub grad: f64,
    pub vw1: f64,
    pub vw2: f64,
    /// Sup-norm fluctuation of the conserved quantity.
    pub energy: f64,
    /// Gap between the general and the critical-point form of `b`.
    pub b_forms: f64,
}

/// Quantities bounded by the compactness argument, recorded for inspection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactnessDiagnostics {
    pub r_w2: f64,
    pub a_sup2_plus_b: f64,
}

/// A critical point of `F_r` with its derived constants and residuals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalPointCert {
    pub r: f64,
    pub coeffs: FrozenCoeffs,
    pub value: f64,
    pub energy_c: f64,
    pub v: f64,
    pub w: f64,
    pub residuals: CertResiduals,
    pub bounds: SupBounds,
    pub diagnostics: CompactnessDiagnostics,
    pub sign_convention: String,
    #[serde(rename = "loop")]
    pub z: Loop,
}

impl CriticalPointCert {
    /// Evaluate every field; does not check tolerances.
    pub fn evaluate(z: &Loop, r: f64) -> Result<Self> {
        require_odd_sine(z)?;
        let z = normalize_sign(z)?;
        let coeffs = coefficients(&z, r)?;
        let energy = energy_check(&z, r)?;
        let (v, w) = vw(&z);
        let (vw1, vw2) = vw_residuals(v, w, r)?;
        let sup = z.sup_norm();
        let residuals = CertResiduals {
            grad: gradient_residual(&z, r)?,
            vw1,
            vw2,
            energy: energy.deviation,
            b_forms: (coeffs.b - b_at_critical(&z, r)?).abs(),
        };
        Ok(Self {
            r,
            coeffs,
            value: value(&z, r)?,
            energy_c: energy.c,
            v,
            w,
            residuals,
            bounds: SupBounds::new(sup, r),
            diagnostics: CompactnessDiagnostics {
                r_w2: r * w * w,
                a_sup2_plus_b: coeffs.a * sup * sup + coeffs.b,
            },
            sign_convention: "z > 0 on (0, 1)".into(),
            z,
        })
    }

    /// Evaluate and require `grad_res < tol`, `energy_c > 0` and `v, w > 0`.
    pub fn certify(z: &Loop, r: f64, tol: f64) -> Result<Self> {
        let cert = Self::evaluate(z, r)?;
        if !(cert.residuals.grad < tol) {
            return Err(Error::Precondition(format!(
                "gradient residual {:.3e} exceeds certification tolerance {tol:.1e}",
                cert.residuals.grad
            )));
        }
        if !(cert.energy_c > 0.0 && cert.v > 0.0 && cert.w > 0.0) {
            return Err(Error::Precondition(format!(
                "critical point with c = {}, v = {}, w = {} violates positivity",
                cert.energy_c, cert.v, cert.w
            )));
        }
        Ok(cert)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solve::objective::{directional_check, symmetry_defect};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sine(n: usize) -> Loop {
        let mut c = vec![0.0; n];
        c[0] = 1.0;
        Loop::new(SymmetryClass::OddSine, c).unwrap()
    }

    fn free_fall(n: usize) -> Loop {
        let mut c = vec![0.0; n];
        c[0] = (2.0 / PI).cbrt();
        Loop::new(SymmetryClass::OddSine, c).unwrap()
    }

    fn random_loop(rng: &mut ChaCha8Rng, n: usize) -> Loop {
        let mut c: Vec<f64> = (0..n)
            .map(|k| rng.gen_range(-0.3..0.3) / (1 + k * k) as f64)
            .collect();
        c[0] = rng.gen_range(0.5..1.5);
        Loop::new(SymmetryClass::OddSine, c).unwrap()
    }

    #[test]
    fn values_at_the_sine() {
        let z = sine(4);
        assert!((value(&z, 0.0).unwrap() - (PI * PI / 2.0 + 4.0)).abs() < 1e-13);
        assert!((value(&z, 1.0).unwrap() - (PI * PI / 2.0 + 4.0 + 4.0 / 3.0)).abs() < 1e-13);
        let c = 0.7;
        let scaled = Loop::new(SymmetryClass::OddSine, vec![c, 0.0]).unwrap();
        let expected = c.powi(4) * 2.0 * 0.5 * (PI * PI / 2.0) + 2.0 / (c * c * 0.5);
        assert!((value(&scaled, 0.0).unwrap() - expected).abs() < 1e-12);
        let zero = Loop::new(SymmetryClass::OddSine, vec![0.0, 0.0]).unwrap();
        assert!(matches!(value(&zero, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn free_fall_is_critical() {
        let z = free_fall(8);
        assert!(gradient(&z, 0.0).unwrap().sup_norm() < 1e-10);
        let coeffs = coefficients(&z, 0.0).unwrap();
        assert!(coeffs.a == 0.0 && (coeffs.b - PI * PI).abs() < 1e-12);
        let e = energy_check(&z, 0.0).unwrap();
        assert!((e.c - PI * PI * (2.0 / PI).powf(2.0 / 3.0)).abs() < 1e-12);
        assert!(e.deviation < 1e-8);
        let (v, w) = vw(&z);
        assert!((v - 0.5).abs() < 1e-12 && (w - 4.0 / 3.0).abs() < 1e-12);
        let (r1, r2) = vw_residuals(v, w, 0.0).unwrap();
        assert!(r1 < 1e-10 && r2 < 1e-10);
    }

    #[test]
    fn gradient_at_the_sine_uses_b_equal_eight_minus_pi_squared() {
        let z = sine(4);
        let b = coefficients(&z, 0.0).unwrap().b;
        assert!((b - (8.0 - PI * PI)).abs() < 1e-12);
        // −4‖z‖²(z'' + bz) = −2(−π² + 8 − π²) sin(πτ)
        let g = gradient(&z, 0.0).unwrap();
        assert!((g.coeffs()[0] + 2.0 * (8.0 - 2.0 * PI * PI)).abs() < 1e-12);
        assert!(g.coeffs()[1..].iter().all(|c| c.abs() < 1e-13));
    }

    #[test]
    fn gradient_matches_closed_form_and_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &r in &[0.0, 0.1, 0.171_572_875_253_809_9, 1.0, 5.0] {
            let z = random_loop(&mut rng, 6);
            let g = gradient(&z, r).unwrap();
            let f = gradient_formula(&z, r).unwrap();
            for (x, y) in g.coeffs().iter().zip(f.coeffs()) {
                assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()));
            }
            let obj = FrozenFunctional::for_loop(&z, r);
            let x = DVector::from_column_slice(z.coeffs());
            for _ in 0..4 {
                let dir = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
                assert!(directional_check(&obj, &x, &dir, 1e-5).unwrap() < 1e-6);
            }
        }
    }

    #[test]
    fn exact_and_finite_difference_hessians_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = random_loop(&mut rng, 5);
        let exact = hessian(&z, 0.7, HessianMode::Exact).unwrap();
        let fd = hessian(&z, 0.7, HessianMode::FiniteDifference).unwrap();
        assert!(symmetry_defect(&exact) < 1e-10);
        assert!((&exact - &fd).abs().max() < 1e-5 * exact.abs().max());
    }

    #[test]
    fn linearized_hessian_needs_a_critical_point() {
        let z = sine(4);
        assert!(matches!(
            hessian(&z, 0.0, HessianMode::Linearized),
            Err(Error::Precondition(_))
        ));
        let ff = free_fall(6);
        let lin = hessian(&ff, 0.0, HessianMode::Linearized).unwrap();
        let exact = hessian(&ff, 0.0, HessianMode::Exact).unwrap();
        assert!((&lin - &exact).abs().max() < 1e-10 * exact.abs().max());
    }

    #[test]
    fn energy_is_not_conserved_away_from_critical_points() {
        let z = Loop::new(SymmetryClass::OddSine, vec![1.0, 0.3]).unwrap();
        assert!(energy_check(&z, 1.0).unwrap().deviation > 0.1);
    }
}

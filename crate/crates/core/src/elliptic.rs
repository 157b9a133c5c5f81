//! Complete elliptic integrals in the parameter convention `m = k²`.
//!
//! The moment integrals
//!
//! ```text
//! I_n(m) = ∫₀¹ ζ^{2n} / √((1 − ζ²)(1 − m ζ²)) dζ
//! ```
//!
//! are evaluated by the substitution ζ = sin θ, which removes the endpoint
//! singularity, followed by adaptive Gauss–Kronrod quadrature. `K` and `E` have
//! a second, independent evaluation path through the arithmetic–geometric mean;
//! the identity reports compare the two.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Absolute tolerance handed to the adaptive quadrature.
const QUAD_TOL: f64 = 1e-15;
/// Largest admissible parameter.
const M_MAX: f64 = 1.0 - 1e-12;
/// Steps of the Richardson-extrapolated central difference.
const FD_STEP: f64 = 1e-4;
/// Below this |m| the Riccati residual is evaluated at offset points.
const RICCATI_NEAR_ZERO: f64 = 1e-6;
const RICCATI_OFFSET: f64 = 1e-3;

fn check_parameter(m: f64) -> Result<()> {
    if !m.is_finite() || m >= M_MAX {
        return Err(Error::Domain(format!(
            "elliptic parameter must satisfy m < 1, got {m}"
        )));
    }
    Ok(())
}

/// `I_n(m)` by quadrature.
pub fn moment(n: u32, m: f64) -> Result<f64> {
    check_parameter(m)?;
    Ok(quadrature::integrate(
        |theta| {
            let s2 = theta.sin().powi(2);
            s2.powi(n as i32) / (1.0 - m * s2).sqrt()
        },
        0.0,
        FRAC_PI_2,
        QUAD_TOL,
    ))
}

/// `I_n(0) = (2n−1)!! π / (2^{n+1} n!)`.
pub fn moment_at_zero(n: u32) -> f64 {
    // Product form of (2n−1)!!/(2^n n!) avoids overflow.
    (1..=n).fold(FRAC_PI_2, |acc, k| acc * (2 * k - 1) as f64 / (2 * k) as f64)
}

/// `(K(m), E(m))` by the arithmetic–geometric mean.
pub fn complete_ke(m: f64) -> Result<(f64, f64)> {
    check_parameter(m)?;
    let mut a = 1.0_f64;
    let mut b = (1.0 - m).sqrt();
    let mut sum = 0.5 * m;
    let mut weight = 0.5;
    for _ in 0..64 {
        let c = 0.5 * (a - b);
        weight *= 2.0;
        sum += weight * c * c;
        let next = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next;
        // Quadratic convergence: once c is at rounding level the remaining terms vanish,
        // while continuing would multiply rounding noise by 2^n.
        if c.abs() <= f64::EPSILON * a {
            break;
        }
    }
    let k = FRAC_PI_2 / a;
    Ok((k, k * (1.0 - sum)))
}

/// `(K(m), E(m))` by direct quadrature; the oracle for [`complete_ke`].
pub fn complete_ke_quadrature(m: f64) -> Result<(f64, f64)> {
    check_parameter(m)?;
    let k = moment(0, m)?;
    let e = quadrature::integrate(
        |theta| (1.0 - m * theta.sin().powi(2)).sqrt(),
        0.0,
        FRAC_PI_2,
        QUAD_TOL,
    );
    Ok((k, e))
}

/// `dK/dm = (E − (1−m)K) / (2m(1−m))`.
pub fn dk_dm(m: f64) -> Result<f64> {
    nonzero(m)?;
    let (k, e) = complete_ke(m)?;
    Ok((e - (1.0 - m) * k) / (2.0 * m * (1.0 - m)))
}

/// `dE/dm = (E − K) / (2m)`.
pub fn de_dm(m: f64) -> Result<f64> {
    nonzero(m)?;
    let (k, e) = complete_ke(m)?;
    Ok((e - k) / (2.0 * m))
}

fn nonzero(m: f64) -> Result<()> {
    if m == 0.0 {
        return Err(Error::Domain(
            "formula divides by m; use the limit at m = 0".into(),
        ));
    }
    Ok(())
}

/// Closed form `I₂ = ((m+2)K − 2(m+1)E) / (3m²)`.
pub fn moment2_closed_form(m: f64) -> Result<f64> {
    nonzero(m)?;
    let (k, e) = complete_ke(m)?;
    Ok(((m + 2.0) * k - 2.0 * (m + 1.0) * e) / (3.0 * m * m))
}

/// The ratio `I₁/I₀`, which equals `(1 − E/K)/m` away from `m = 0`.
pub fn moment_ratio(m: f64) -> Result<f64> {
    check_parameter(m)?;
    if m.abs() >= 1e-3 {
        let (k, e) = complete_ke(m)?;
        Ok((1.0 - e / k) / m)
    } else {
        Ok(moment(1, m)? / moment(0, m)?)
    }
}

/// Richardson-extrapolated central difference with steps `h` and `h/2`.
pub fn richardson_derivative<F: Fn(f64) -> Result<f64>>(f: F, x: f64, h: f64) -> Result<f64> {
    let central = |h: f64| -> Result<f64> { Ok((f(x + h)? - f(x - h)?) / (2.0 * h)) };
    let coarse = central(h)?;
    let fine = central(0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// All moments `I_0..=I_{n_max}` together with `K` and `E` at one parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EllipticEval {
    pub m: f64,
    pub moments: Vec<f64>,
    pub k: f64,
    pub e: f64,
}

impl EllipticEval {
    pub fn new(m: f64, n_max: u32) -> Result<Self> {
        let moments = (0..=n_max).map(|n| moment(n, m)).collect::<Result<_>>()?;
        let (k, e) = complete_ke(m)?;
        Ok(Self { m, moments, k, e })
    }
}

/// Residuals of the recursion, the `I₂` closed form and the derivative formulas.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdentityReport {
    pub m: f64,
    /// `max_{n≤4} |I_{n+2} − [2(n+1)(m+1)I_{n+1} − (2n+1)I_n] / ((2n+3)m)|`; absent at m = 0.
    pub rec_res: Option<f64>,
    pub i2_res: f64,
    /// Largest deviation of the `K'`, `E'` formulas from numeric derivatives; absent at m = 0.
    pub der_res: Option<f64>,
}

pub fn identities_report(m: f64) -> Result<IdentityReport> {
    check_parameter(m)?;
    if m == 0.0 {
        let i2 = moment(2, 0.0)?;
        return Ok(IdentityReport {
            m,
            rec_res: None,
            i2_res: (i2 - moment_at_zero(2)).abs(),
            der_res: None,
        });
    }
    let eval = EllipticEval::new(m, 6)?;
    let i = &eval.moments;
    let rec_res = (0..=4usize)
        .map(|n| {
            let nf = n as f64;
            let rhs = (2.0 * (nf + 1.0) * (m + 1.0) * i[n + 1] - (2.0 * nf + 1.0) * i[n])
                / ((2.0 * nf + 3.0) * m);
            (i[n + 2] - rhs).abs()
        })
        .fold(0.0, f64::max);
    let i2_res = (i[2] - moment2_closed_form(m)?).abs();
    let dk_numeric = richardson_derivative(|x| Ok(complete_ke(x)?.0), m, FD_STEP)?;
    let de_numeric = richardson_derivative(|x| Ok(complete_ke(x)?.1), m, FD_STEP)?;
    let der_res = (dk_numeric - dk_dm(m)?)
        .abs()
        .max((de_numeric - de_dm(m)?).abs());
    Ok(IdentityReport {
        m,
        rec_res: Some(rec_res),
        i2_res,
        der_res: Some(der_res),
    })
}

/// Right side of the Riccati equation satisfied by `y = I₁/I₀`.
pub fn riccati_rhs(m: f64, y: f64) -> f64 {
    1.0 / (2.0 * m * (1.0 - m)) - y / (m * (1.0 - m)) + y * y / (2.0 * (1.0 - m))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiccatiReport {
    pub residual: f64,
    /// Points where the residual was evaluated; differs from the request near m = 0.
    pub evaluated_at: Vec<f64>,
    pub notice: Option<String>,
}

/// `|(I₁/I₀)'(m) − riccati_rhs(m, I₁/I₀)|` with a numeric derivative.
pub fn riccati_residual(m: f64) -> Result<RiccatiReport> {
    check_parameter(m)?;
    let single = |x: f64| -> Result<f64> {
        let derivative = richardson_derivative(moment_ratio, x, FD_STEP)?;
        Ok((derivative - riccati_rhs(x, moment_ratio(x)?)).abs())
    };
    if m.abs() <= RICCATI_NEAR_ZERO {
        let points = vec![-RICCATI_OFFSET, RICCATI_OFFSET];
        let residual = points
            .iter()
            .map(|&x| single(x))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        return Ok(RiccatiReport {
            residual,
            evaluated_at: points,
            notice: Some(format!(
                "m = {m} is at the removable singularity; residual taken at ±{RICCATI_OFFSET}"
            )),
        });
    }
    Ok(RiccatiReport {
        residual: single(m)?,
        evaluated_at: vec![m],
        notice: None,
    })
}

/// `F(m) = (2 − m) I₁(m)/I₀(m)`; `F(0) = 1`.
pub fn ratio_f(m: f64) -> Result<f64> {
    Ok((2.0 - m) * moment_ratio(m)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Values strictly decrease as the grid increases.
    pub monotone_ok: bool,
    pub all_gt_one: bool,
}

/// Evaluate `F` on a grid of negative parameters and check `F > 1` and monotone decrease.
pub fn f_monotonicity(grid: &[f64]) -> Result<MonotonicityReport> {
    if let Some(bad) = grid.iter().find(|&&m| !(m < 0.0)) {
        return Err(Error::Domain(format!(
            "monotonicity grid must be negative, got {bad}"
        )));
    }
    let mut pairs: Vec<(f64, f64)> = grid
        .iter()
        .map(|&m| Ok((m, ratio_f(m)?)))
        .collect::<Result<_>>()?;
    let values = pairs.iter().map(|p| p.1).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let monotone_ok = pairs.windows(2).all(|w| w[0].0 == w[1].0 || w[1].1 < w[0].1);
    let all_gt_one = pairs.iter().all(|p| p.1 > 1.0);
    Ok(MonotonicityReport {
        grid: grid.to_vec(),
        values,
        monotone_ok,
        all_gt_one,
    })
}

/// One row of the tabulated grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRow {
    pub m: f64,
    pub i0: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
    pub k: f64,
    pub e: f64,
    pub rec_res: Option<f64>,
    pub i2_res: f64,
    pub der_res: Option<f64>,
    pub riccati_res: f64,
}

/// Tabulate moments, `K`, `E` and every residual on `start, start+step, …, ≤ end`.
pub fn grid_table(start: f64, end: f64, step: f64) -> Result<Vec<GridRow>> {
    if !(step > 0.0) || !(end >= start) {
        return Err(Error::Config(format!(
            "grid {start}:{end}:{step} is not well ordered"
        )));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|j| {
            let mut m = start + j as f64 * step;
            // Snap accumulated round-off onto the removable point.
            if m.abs() < 1e-9 * step {
                m = 0.0;
            }
            let eval = EllipticEval::new(m, 4)?;
            let report = identities_report(m)?;
            let riccati = riccati_residual(m)?;
            let i = &eval.moments;
            Ok(GridRow {
                m,
                i0: i[0],
                i1: i[1],
                i2: i[2],
                i3: i[3],
                i4: i[4],
                k: eval.k,
                e: eval.e,
                rec_res: report.rec_res,
                i2_res: report.i2_res,
                der_res: report.der_res,
                riccati_res: riccati.residual,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const RHO: f64 = (std::f64::consts::SQRT_2 - 1.0) * (std::f64::consts::SQRT_2 - 1.0);

    #[test]
    fn moments_at_zero_match_double_factorial_formula() {
        assert!((moment(0, 0.0).unwrap() - PI / 2.0).abs() < 1e-11);
        assert!((moment(1, 0.0).unwrap() - PI / 4.0).abs() < 1e-11);
        assert!((moment(2, 0.0).unwrap() - 3.0 * PI / 16.0).abs() < 1e-11);
        for n in 0..=6 {
            assert!((moment(n, 0.0).unwrap() - moment_at_zero(n)).abs() < 1e-11);
        }
    }

    #[test]
    fn agm_agrees_with_quadrature() {
        assert_eq!(complete_ke(0.0).unwrap(), (PI / 2.0, PI / 2.0));
        for m in [-2.0, -0.5, 0.5] {
            let (k, _) = complete_ke(m).unwrap();
            assert!((k - moment(0, m).unwrap()).abs() < 1e-10, "m = {m}");
        }
        for m in [-20.0, -1.0, -1e-3, 0.3, 0.9] {
            let (k, e) = complete_ke(m).unwrap();
            let (kq, eq) = complete_ke_quadrature(m).unwrap();
            assert!((k - kq).abs() < 1e-12 && (e - eq).abs() < 1e-12, "m = {m}");
        }
    }

    #[test]
    fn e_at_minus_one_matches_its_integral() {
        let (_, e) = complete_ke(-1.0).unwrap();
        // ∫₀¹ √(1+ζ²)/√(1−ζ²) dζ, with ζ = sin θ.
        let direct = quadrature::integrate(|t| (1.0 + t.sin().powi(2)).sqrt(), 0.0, PI / 2.0, 1e-15);
        assert!((e - direct).abs() < 1e-10);
    }

    #[test]
    fn domain_is_enforced() {
        assert!(matches!(moment(0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(complete_ke(1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn identity_reports_at_sample_parameters() {
        assert!(identities_report(-0.5).unwrap().rec_res.unwrap() < 1e-9);
        assert!(identities_report(0.5).unwrap().der_res.unwrap() < 1e-6);
        assert!(identities_report(-RHO / 2.0).unwrap().i2_res < 1e-10);
        let at_zero = identities_report(0.0).unwrap();
        assert!(at_zero.rec_res.is_none() && at_zero.i2_res < 1e-11);
    }

    #[test]
    fn riccati_residuals() {
        for m in [-1.0, 0.3, -RHO] {
            assert!(riccati_residual(m).unwrap().residual < 1e-6, "m = {m}");
        }
        let near = riccati_residual(1e-8).unwrap();
        assert!(near.notice.is_some() && near.residual < 1e-6);
    }

    #[test]
    fn ratio_matches_quadrature() {
        for m in [-10.0, -1.0, -0.01, 0.2, 0.8] {
            let q = moment(1, m).unwrap() / moment(0, m).unwrap();
            assert!((moment_ratio(m).unwrap() - q).abs() < 1e-10);
        }
    }

    #[test]
    fn ratio_f_properties() {
        assert!((ratio_f(0.0).unwrap() - 1.0).abs() < 1e-13);
        let report = f_monotonicity(&[-0.1, -1.0, -5.0, -20.0]).unwrap();
        assert!(report.all_gt_one);
        assert!(report.monotone_ok);
        assert!(f_monotonicity(&[-1.0, 0.5]).is_err());
    }
}

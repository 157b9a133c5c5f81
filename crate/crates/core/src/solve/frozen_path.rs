use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::continuation::{continuation, ContinuationPath, StepPolicy};
use super::newton::{newton, NewtonOptions};
use super::spectrum::{frozen_spectrum, SpectrumReport};
use crate::error::Result;
use crate::frozen::{CriticalPointCert, FrozenFunctional, CERT_TOL};
use crate::levi_civita::{self, MeanIdentities, QResidual};

/// One accepted point on a path of critical points of `F_r`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrozenStep {
    pub cert: CriticalPointCert,
    pub spectrum: SpectrumReport,
    /// Residual of the collision-orbit equation for `q = z²∘τ_z⁻¹`.
    pub orbit: QResidual,
    pub mean_identities: MeanIdentities,
    pub newton_iterations: usize,
}

impl FrozenStep {
    /// Certify `z` at `r` and compute every per-step diagnostic.
    pub fn evaluate(z: &crate::loops::Loop, r: f64, newton_iterations: usize) -> Result<Self> {
        let cert = CriticalPointCert::certify(z, r, CERT_TOL)?;
        let spectrum = frozen_spectrum(&cert.z, r)?;
        let orbit = levi_civita::forward(&cert.z)?;
        Ok(Self {
            orbit: levi_civita::q_residual(&orbit, r)?,
            mean_identities: levi_civita::mean_identities(&cert.z, &orbit),
            cert,
            spectrum,
            newton_iterations,
        })
    }
}

/// Follow the critical point of `F_r` from `start` (certified at `r0`) to `r1`.
///
/// Each step runs Newton from the previous solution. A step is rejected when Newton
/// fails or the result cannot be certified; the returned path may be incomplete.
pub fn frozen_path(
    start: &CriticalPointCert,
    r1: f64,
    policy: &StepPolicy,
    options: &NewtonOptions,
) -> Result<ContinuationPath<FrozenStep>> {
    let first = FrozenStep::evaluate(&start.z, start.r, 0)?;
    continuation(start.r, r1, first, policy, |r, prev| {
        let objective = FrozenFunctional::for_loop(&prev.cert.z, r);
        let x0 = DVector::from_column_slice(prev.cert.z.coeffs());
        let report = newton(&objective, &x0, options)?;
        let z = objective.to_loop(&report.x)?;
        FrozenStep::evaluate(&z, r, report.iterations)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solve::free_fall_seed;

    #[test]
    fn short_path_from_free_fall() {
        let seed = free_fall_seed(32).unwrap();
        let path = frozen_path(&seed, 0.2, &StepPolicy::new(0.1, 0.2), &NewtonOptions::default())
            .unwrap()
            .into_result()
            .unwrap();
        for p in &path.points {
            let s = &p.cert;
            assert!(s.cert.residuals.vw1 < 1e-7 && s.cert.residuals.vw2 < 1e-7);
            assert_eq!(s.spectrum.morse_index, 0);
            assert!(s.orbit.beta_mu_res < 1e-5, "{:?}", s.orbit);
        }
    }
}

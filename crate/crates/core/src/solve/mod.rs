//! Newton solving, parameter continuation, spectra and signed counts.

pub mod continuation;
pub mod frozen_path;
pub mod newton;
pub mod objective;
pub mod spectrum;

use std::f64::consts::PI;

pub use continuation::{continuation, ContinuationPath, PathPoint, StepPolicy};
pub use frozen_path::{frozen_path, FrozenStep};
pub use newton::{newton, NewtonOptions, NewtonReport};
pub use objective::Objective;
pub use spectrum::{euler_count, frozen_spectrum, full_space_spectrum, SpectrumReport};

use crate::error::{Error, Result};
use crate::frozen::CriticalPointCert;
use crate::loops::{Loop, SymmetryClass};

/// Default number of odd-sine modes.
pub const DEFAULT_MODES: usize = 64;

/// Amplitude `(2/π)^{1/3}` of the free-fall critical point `A sin(πτ)` of `F_0`.
pub fn free_fall_amplitude() -> f64 {
    (2.0 / PI).cbrt()
}

/// The free-fall loop `A sin(πτ)` with `n` modes, certified at `r = 0`.
pub fn free_fall_seed(n: usize) -> Result<CriticalPointCert> {
    if n < 4 {
        return Err(Error::Config(format!("free-fall seed needs at least 4 modes, got {n}")));
    }
    let mut coeffs = vec![0.0; n];
    coeffs[0] = free_fall_amplitude();
    let z = Loop::new(SymmetryClass::OddSine, coeffs)?;
    CriticalPointCert::certify(&z, 0.0, 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frozen::FrozenFunctional;
    use nalgebra::DVector;

    #[test]
    fn free_fall_seed_is_certified() {
        let cert = free_fall_seed(DEFAULT_MODES).unwrap();
        assert!(cert.residuals.grad < 1e-12);
        assert!((cert.v - 0.5).abs() < 1e-10);
        assert!(cert.coeffs.a == 0.0);
        assert!((cert.coeffs.b - PI * PI).abs() < 1e-10);
        assert!(free_fall_seed(3).is_err());
    }

    #[test]
    fn newton_returns_to_free_fall() {
        let cert = free_fall_seed(DEFAULT_MODES).unwrap();
        let f = FrozenFunctional::for_loop(&cert.z, 0.0);
        let x0 = DVector::from_fn(DEFAULT_MODES, |k, _| {
            cert.z.coeffs()[k] + 1e-2 / (1.0 + k as f64).powi(2)
        });
        let report = newton(&f, &x0, &NewtonOptions::default()).unwrap();
        assert!(report.iterations <= 6, "{:?}", report.residuals);
        let seed = DVector::from_column_slice(cert.z.coeffs());
        assert!((&report.x - seed).amax() < 1e-9);
    }

    #[test]
    fn free_fall_spectra() {
        let cert = free_fall_seed(DEFAULT_MODES).unwrap();
        let sym = frozen_spectrum(&cert.z, 0.0).unwrap();
        assert_eq!((sym.morse_index, sym.nullity), (0, 0));
        let full = full_space_spectrum(&cert.z, 0.0).unwrap();
        assert_eq!(full.report.nullity, 1, "{:?}", &full.report.eigenvalues[..4]);
        assert_eq!(full.report.morse_index, 1);
        assert!(full.kernel_alignment.unwrap() > 0.999);
    }
}

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::objective::{orthonormal_hessian, Objective};
use crate::detline::{mu, CutoffRho};
use crate::error::{Error, Result};
use crate::frozen::{self, FrozenFunctional, HessianMode};
use crate::loops::{Loop, SymmetryClass};

/// Relative null tolerance: `|λ| < NULL_TOL · max|λ|` counts as zero.
pub const NULL_TOL: f64 = 1e-6;

/// Eigenvalues of a discretized Hessian with their counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Sorted ascending.
    pub eigenvalues: Vec<f64>,
    pub morse_index: usize,
    pub nullity: usize,
    pub positives: usize,
    /// Absolute threshold used for the nullity.
    pub null_tol: f64,
    /// Spectral count over the eigenvalues outside the null band.
    pub mu: f64,
    pub min_abs: f64,
}

impl SpectrumReport {
    /// Analyze a symmetric matrix (already in orthonormal coordinates).
    pub fn from_matrix(h: &DMatrix<f64>, null_rel_tol: f64) -> Result<(Self, DMatrix<f64>)> {
        let eig = SymmetricEigen::new(h.clone());
        let mut order: Vec<usize> = (0..h.nrows()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(h.nrows(), h.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
        let radius = eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let null_tol = null_rel_tol * radius;
        let nullity = eigenvalues.iter().filter(|v| v.abs() < null_tol).count();
        let morse_index = eigenvalues.iter().filter(|v| **v <= -null_tol).count();
        let positives = eigenvalues.len() - nullity - morse_index;
        let outside: Vec<f64> = eigenvalues
            .iter()
            .copied()
            .filter(|v| v.abs() >= null_tol)
            .collect();
        let mu = mu(&outside, &CutoffRho::default(), f64::NEG_INFINITY)?;
        let min_abs = eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        Ok((
            Self {
                eigenvalues,
                morse_index,
                nullity,
                positives,
                null_tol,
                mu,
                min_abs,
            },
            vectors,
        ))
    }

    /// The spectrum of the L² Hessian of `objective` at `x`.
    pub fn of_objective<O: Objective + ?Sized>(objective: &O, x: &DVector<f64>) -> Result<Self> {
        let h = orthonormal_hessian(&objective.hessian(x)?, &objective.metric());
        Ok(Self::from_matrix(&h, NULL_TOL)?.0)
    }
}

/// Spectrum of the Hessian of `F_r` on the odd-sine space.
pub fn frozen_spectrum(z: &Loop, r: f64) -> Result<SpectrumReport> {
    let h = frozen::hessian(z, r, HessianMode::Exact)?;
    let metric = FrozenFunctional::for_loop(z, r).metric();
    Ok(SpectrumReport::from_matrix(&orthonormal_hessian(&h, &metric), NULL_TOL)?.0)
}

/// Spectrum of `F_r` with the symmetry forgotten, and how well the kernel lines up with `z'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullSpaceSpectrum {
    pub report: SpectrumReport,
    /// `|⟨ξ̂, z'/‖z'‖⟩|` for the unit kernel vector `ξ̂`, if the nullity is one.
    pub kernel_alignment: Option<f64>,
}

pub fn full_space_spectrum(z: &Loop, r: f64) -> Result<FullSpaceSpectrum> {
    if z.class() != SymmetryClass::OddSine {
        return Err(Error::ClassMismatch(format!(
            "expected an odd-sine critical point, got {:?}",
            z.class()
        )));
    }
    let full = z.to_full();
    let objective = FrozenFunctional::for_loop(&full, r);
    let x = DVector::from_column_slice(full.coeffs());
    let metric = objective.metric();
    let h = orthonormal_hessian(&objective.hessian(&x)?, &metric);
    let (report, vectors) = SpectrumReport::from_matrix(&h, NULL_TOL)?;
    let kernel_alignment = (report.nullity == 1).then(|| {
        let k = report
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .expect("nonempty spectrum");
        let d = z.derivative();
        let mut tangent = DVector::from_fn(full.modes(), |i, _| {
            d.coeffs().get(i).copied().unwrap_or(0.0) * metric[i].sqrt()
        });
        tangent.normalize_mut();
        vectors.column(k).dot(&tangent).abs()
    });
    Ok(FullSpaceSpectrum {
        report,
        kernel_alignment,
    })
}

/// `Σ (−1)^index` over nondegenerate critical points.
pub fn euler_count(reports: &[SpectrumReport]) -> Result<i64> {
    reports.iter().try_fold(0_i64, |acc, r| {
        if r.nullity > 0 {
            return Err(Error::DegeneratePoint { nullity: r.nullity });
        }
        Ok(acc + if r.morse_index % 2 == 0 { 1 } else { -1 })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(index: usize, nullity: usize) -> SpectrumReport {
        SpectrumReport {
            eigenvalues: vec![],
            morse_index: index,
            nullity,
            positives: 0,
            null_tol: 0.0,
            mu: 1.0,
            min_abs: 1.0,
        }
    }

    #[test]
    fn euler_counts() {
        assert_eq!(euler_count(&[report(0, 0)]).unwrap(), 1);
        assert_eq!(euler_count(&[]).unwrap(), 0);
        assert_eq!(euler_count(&[report(0, 0), report(1, 0)]).unwrap(), 0);
        assert!(matches!(
            euler_count(&[report(0, 1)]),
            Err(Error::DegeneratePoint { nullity: 1 })
        ));
    }

    #[test]
    fn counts_of_a_diagonal_matrix() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, 1e-9, 3.0, 4.0]));
        let (r, _) = SpectrumReport::from_matrix(&h, NULL_TOL).unwrap();
        assert_eq!((r.morse_index, r.nullity, r.positives), (1, 1, 2));
        assert_eq!(r.mu, -2.0);
        assert_eq!(r.eigenvalues[0], -2.0);
    }
}

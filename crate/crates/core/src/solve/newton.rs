use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::objective::{gradient_norm, orthonormal_hessian, Objective};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Target L² norm of the gradient.
    pub tol: f64,
    pub max_iter: usize,
    /// Hessians with `max|λ|/min|λ|` above this are reported as singular.
    pub condition_limit: f64,
    /// Halvings of the step before giving up on a line search.
    pub max_backtracks: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 30,
            condition_limit: 1e12,
            max_backtracks: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Gradient norm before each step and at the end.
    pub residuals: Vec<f64>,
    /// `r_{k+1} / r_k²` for consecutive residuals; bounded ratios mean quadratic convergence.
    pub quadratic_ratios: Vec<f64>,
    /// Steps that were shortened by the line search.
    pub damped_steps: usize,
}

impl NewtonReport {
    pub fn residual(&self) -> f64 {
        *self.residuals.last().expect("at least the initial residual")
    }
}

fn residual_at<O: Objective + ?Sized>(objective: &O, x: &DVector<f64>, metric: &DVector<f64>) -> Result<f64> {
    objective.admissible(x)?;
    Ok(gradient_norm(&objective.gradient(x)?, metric))
}

/// Newton's method for a critical point of `objective`, starting from `x0`.
///
/// Steps are computed in orthonormal coordinates from a symmetric eigensolve, so
/// saddle points are found as readily as minima. The line search halves the step
/// until the point is admissible and the gradient norm decreases.
pub fn newton<O: Objective + ?Sized>(
    objective: &O,
    x0: &DVector<f64>,
    options: &NewtonOptions,
) -> Result<NewtonReport> {
    let metric = objective.metric();
    let sqrt_metric = metric.map(f64::sqrt);
    let mut x = x0.clone();
    let mut residual = residual_at(objective, &x, &metric)?;
    let mut residuals = vec![residual];
    let mut damped_steps = 0;
    let mut iterations = 0;
    while residual >= options.tol {
        if iterations == options.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                last: residual,
                history: residuals,
            });
        }
        iterations += 1;
        let g = objective.gradient(&x)?.component_div(&sqrt_metric);
        let h = orthonormal_hessian(&objective.hessian(&x)?, &metric);
        let eig = SymmetricEigen::new(h);
        let max_abs = eig.eigenvalues.amax();
        let min_abs = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let condition = max_abs / min_abs;
        if !(condition <= options.condition_limit) {
            return Err(Error::Singular { condition });
        }
        let q = &eig.eigenvectors;
        let coeffs = (q.transpose() * &g).component_div(&eig.eigenvalues);
        let step = -(q * coeffs).component_div(&sqrt_metric);

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_backtracks {
            let trial = &x + &step * t;
            if let Ok(r) = residual_at(objective, &trial, &metric) {
                if r < (1.0 - 1e-4 * t) * residual || r < options.tol {
                    accepted = Some((trial, r));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((next, r)) = accepted else {
            return Err(Error::NonConvergence {
                iterations,
                last: residual,
                history: residuals,
            });
        };
        if t < 1.0 {
            damped_steps += 1;
        }
        x = next;
        residual = r;
        residuals.push(residual);
    }
    let quadratic_ratios = residuals
        .windows(2)
        .map(|w| w[1] / (w[0] * w[0]))
        .collect();
    Ok(NewtonReport {
        x,
        iterations,
        residuals,
        quadratic_ratios,
        damped_steps,
    })
}

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// A smooth functional on a coefficient space, as seen by the Newton solver.
///
/// Coordinates are coefficients in a fixed orthogonal (not necessarily
/// orthonormal) basis; `metric` holds the squared basis norms, so the L² gradient
/// has coefficients `gradient[k] / metric[k]`.
pub trait Objective {
    fn dim(&self) -> usize;

    /// `⟨e_k, e_k⟩` for every coordinate.
    fn metric(&self) -> DVector<f64>;

    /// Domain check; the line search rejects points that fail it.
    fn admissible(&self, x: &DVector<f64>) -> Result<()>;

    fn value(&self, x: &DVector<f64>) -> Result<f64>;

    /// Partial derivatives with respect to the coefficients.
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// Second partial derivatives with respect to the coefficients.
    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// L² norm of the gradient loop.
pub fn gradient_norm(gradient: &DVector<f64>, metric: &DVector<f64>) -> f64 {
    gradient
        .iter()
        .zip(metric.iter())
        .map(|(g, m)| g * g / m)
        .sum::<f64>()
        .sqrt()
}

/// Hessian in the orthonormal basis `e_k / ‖e_k‖`; its eigenvalues are those of the
/// L² Hessian operator restricted to the discretization.
pub fn orthonormal_hessian(hessian: &DMatrix<f64>, metric: &DVector<f64>) -> DMatrix<f64> {
    let scale = metric.map(|m| 1.0 / m.sqrt());
    DMatrix::from_fn(hessian.nrows(), hessian.ncols(), |i, j| {
        hessian[(i, j)] * scale[i] * scale[j]
    })
}

/// Central finite-difference Jacobian of the gradient, one column per coordinate.
pub fn finite_difference_hessian<O: Objective + ?Sized>(
    objective: &O,
    x: &DVector<f64>,
    step: f64,
) -> Result<DMatrix<f64>> {
    let n = objective.dim();
    let mut h = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut plus = x.clone();
        plus[k] += step;
        let mut minus = x.clone();
        minus[k] -= step;
        let column = (objective.gradient(&plus)? - objective.gradient(&minus)?) / (2.0 * step);
        h.set_column(k, &column);
    }
    Ok(h)
}

/// `max |H − Hᵀ|`.
pub fn symmetry_defect(h: &DMatrix<f64>) -> f64 {
    (h - h.transpose()).abs().max()
}

/// Central difference of the value along `direction` compared with the gradient pairing;
/// returns the relative discrepancy.
pub fn directional_check<O: Objective + ?Sized>(
    objective: &O,
    x: &DVector<f64>,
    direction: &DVector<f64>,
    step: f64,
) -> Result<f64> {
    let analytic = objective.gradient(x)?.dot(direction);
    let plus = objective.value(&(x + direction * step))?;
    let minus = objective.value(&(x - direction * step))?;
    let numeric = (plus - minus) / (2.0 * step);
    Ok((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-300))
}

//! Coefficient-space derivatives of the scalar loop norms and the chain rule that
//! lifts a [`Jet`] in those norms to the gradient and Hessian of a functional.

use nalgebra::{DMatrix, DVector};

use crate::jet::Jet;
use crate::loops::{basis_table, grid_point, Loop};

/// `‖z‖²`, `‖z'‖²`, `‖z²‖²` with their coefficient gradients (and the quartic Hessian).
#[derive(Debug, Clone)]
pub(crate) struct LoopScalars {
    pub n: f64,
    pub d: f64,
    pub s: f64,
    /// `⟨e_k, e_k⟩`.
    pub metric: DVector<f64>,
    /// `ω_k²`.
    pub freq_sq: DVector<f64>,
    /// `∂‖z²‖²/∂c_k = 4⟨z³, e_k⟩`.
    pub grad_s: DVector<f64>,
    /// `∂²‖z²‖²/∂c_j∂c_k = 12⟨z² e_j e_k⟩`.
    pub hess_s: Option<DMatrix<f64>>,
}

impl LoopScalars {
    pub fn new(z: &Loop, with_hessian: bool) -> Self {
        let class = z.class();
        let n_modes = z.modes();
        let m = z.quadrature_len();
        let samples = z.samples_on(m);
        let table = basis_table(class, n_modes, m);
        let inv_m = 1.0 / m as f64;
        let cubes = DVector::from_iterator(m, samples.iter().map(|v| v.powi(3) * inv_m));
        let grad_s = table.tr_mul(&cubes) * 4.0;
        let s = samples.iter().map(|v| v.powi(4)).sum::<f64>() * inv_m;
        let hess_s = with_hessian.then(|| {
            let mut weighted = table.clone();
            for (j, v) in samples.iter().enumerate() {
                weighted.row_mut(j).scale_mut(12.0 * v * v * inv_m);
            }
            table.tr_mul(&weighted)
        });
        Self {
            n: z.l2_sq(),
            d: z.deriv_sq(),
            s,
            metric: DVector::from_fn(n_modes, |k, _| class.norm_sq(k)),
            freq_sq: DVector::from_fn(n_modes, |k, _| class.frequency(k).powi(2)),
            grad_s,
            hess_s,
        }
    }

    pub fn grad_n(&self, z: &Loop) -> DVector<f64> {
        DVector::from_fn(z.modes(), |k, _| 2.0 * self.metric[k] * z.coeffs()[k])
    }

    pub fn grad_d(&self, z: &Loop) -> DVector<f64> {
        DVector::from_fn(z.modes(), |k, _| {
            2.0 * self.metric[k] * self.freq_sq[k] * z.coeffs()[k]
        })
    }

    /// The three scalar fields with their block offset in a stacked coefficient vector.
    pub fn fields(&self, z: &Loop, offset: usize) -> [ScalarField; 3] {
        let dim = z.modes();
        [
            ScalarField {
                offset,
                grad: self.grad_n(z),
                hess: Hess::Diagonal(self.metric.map(|v| 2.0 * v)),
            },
            ScalarField {
                offset,
                grad: self.grad_d(z),
                hess: Hess::Diagonal(self.metric.component_mul(&self.freq_sq) * 2.0),
            },
            ScalarField {
                offset,
                grad: self.grad_s.clone(),
                hess: match &self.hess_s {
                    Some(h) => Hess::Dense(h.clone()),
                    None => Hess::Dense(DMatrix::zeros(dim, dim)),
                },
            },
        ]
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Hess {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

/// A scalar function of one coefficient block: gradient and Hessian within the block.
#[derive(Debug, Clone)]
pub(crate) struct ScalarField {
    pub offset: usize,
    pub grad: DVector<f64>,
    pub hess: Hess,
}

/// Gradient `Σ_a f_a ∇s_a` of a functional `f(s_1..s_K)`.
pub(crate) fn chain_gradient<const K: usize>(
    f: &Jet<K>,
    fields: &[ScalarField; K],
    dim: usize,
) -> DVector<f64> {
    let mut g = DVector::zeros(dim);
    for (a, field) in fields.iter().enumerate() {
        let n = field.grad.len();
        g.rows_mut(field.offset, n).axpy(f.g[a], &field.grad, 1.0);
    }
    g
}

/// Hessian `Σ_a f_a ∇²s_a + Σ_ab f_ab ∇s_a ∇s_bᵀ`.
pub(crate) fn chain_hessian<const K: usize>(
    f: &Jet<K>,
    fields: &[ScalarField; K],
    dim: usize,
) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(dim, dim);
    for (a, field) in fields.iter().enumerate() {
        let n = field.grad.len();
        let o = field.offset;
        match &field.hess {
            Hess::Diagonal(d) => {
                for k in 0..n {
                    h[(o + k, o + k)] += f.g[a] * d[k];
                }
            }
            Hess::Dense(m) => {
                let mut block = h.view_mut((o, o), (n, n));
                block += m * f.g[a];
            }
        }
    }
    for (a, fa) in fields.iter().enumerate() {
        for (b, fb) in fields.iter().enumerate() {
            let w = f.h[a][b];
            if w == 0.0 {
                continue;
            }
            let mut block = h.view_mut((fa.offset, fb.offset), (fa.grad.len(), fb.grad.len()));
            block.ger(w, &fa.grad, &fb.grad, 1.0);
        }
    }
    h
}

/// Galerkin projection coefficients `⟨f, e_k⟩` of a sampled function on the quadrature grid of `z`.
pub(crate) fn project_samples(z: &Loop, values: &[f64]) -> DVector<f64> {
    let m = values.len();
    let class = z.class();
    DVector::from_fn(z.modes(), |k, _| {
        values
            .iter()
            .enumerate()
            .map(|(j, v)| v * class.basis(k, grid_point(j, m)))
            .sum::<f64>()
            / m as f64
    })
}

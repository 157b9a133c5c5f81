//! Determinant lines at finite truncation.
//!
//! A self-adjoint operator with spectrum bounded below carries a spectral count
//! `μ(T) = Π ρ(λ)` over its nonzero eigenvalues, where `ρ` is a cutoff that is the
//! identity near zero and `1` far out. `μ` vanishes continuously as eigenvalues
//! approach zero, and the section `s(T) = μ(T)·(kernel ∧ cokernel⁻¹)` of the
//! determinant line is continuous across kernel jumps.
//!
//! The second half of the module builds the classical loop `T_τ`, `τ ∈ [0, 2]`,
//! of self-adjoint operators on `l²(ℤ)` whose kernel bundle (after stabilization
//! by one vector) is a Möbius band: a continuously tracked kernel element comes
//! back with the opposite sign.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Nondecreasing cutoff with `ρ(λ) = λ` for `λ ≤ a` and `ρ(λ) = 1` for `λ ≥ b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffRho {
    a: f64,
    b: f64,
}

impl Default for CutoffRho {
    fn default() -> Self {
        Self { a: 0.5, b: 1.0 }
    }
}

impl CutoffRho {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > a && a <= 1.0 && b.is_finite()) {
            return Err(Error::Config(format!(
                "cutoff needs 0 < a < b and a ≤ 1, got a = {a}, b = {b}"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        if lambda <= self.a {
            return lambda;
        }
        if lambda >= self.b {
            return 1.0;
        }
        // λ + (1 − λ)σ(x) with the cubic smoothstep σ; capped at 1 once λ passes 1.
        let x = (lambda - self.a) / (self.b - self.a);
        let sigma = x * x * (3.0 - 2.0 * x);
        let m = lambda.min(1.0);
        m + (1.0 - m) * sigma
    }
}

/// `Π ρ(λ)` over the nonzero entries of `spectrum`.
///
/// `lower_bound` is the configured bound `𝕽` below which the spectrum must not reach.
pub fn mu(spectrum: &[f64], rho: &CutoffRho, lower_bound: f64) -> Result<f64> {
    let mut product = 1.0;
    for &lambda in spectrum {
        if lambda <= lower_bound {
            return Err(Error::BoundedBelow {
                eigenvalue: lambda,
                bound: lower_bound,
            });
        }
        if lambda != 0.0 {
            product *= rho.eval(lambda);
        }
    }
    Ok(product)
}

/// Sorted eigenvalues and matching orthonormal eigenvectors (as columns).
fn sorted_eigen(t: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(t.clone());
    let mut order: Vec<usize> = (0..t.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(t.nrows(), t.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// The spectral data entering the sections of the determinant line of `T`.
#[derive(Debug, Clone)]
pub struct Sections {
    /// Number of negative eigenvalues.
    pub index: usize,
    /// `μ(T)`, the product over eigenvalues outside the kernel.
    pub mu: f64,
    /// Sign of `μ(T)` for invertible `T`, `0` when `T` has a kernel.
    pub s_sign: i8,
    /// The tautological section is the canonical generator `1` for invertible `T`.
    pub t_sign: i8,
    /// Orthonormal kernel basis (columns); empty for invertible `T`.
    pub kernel: DMatrix<f64>,
}

impl Sections {
    /// `s = (−1)^i t`; vacuous when `T` has a kernel.
    pub fn relation_holds(&self) -> bool {
        if self.kernel.ncols() > 0 {
            return true;
        }
        let expected = if self.index % 2 == 0 { 1 } else { -1 };
        self.s_sign == expected * self.t_sign
    }
}

/// Eigenvalues with `|λ| ≤ kernel_tol · max(1, ‖T‖)` count as kernel.
pub fn sections(t: &DMatrix<f64>, rho: &CutoffRho, kernel_tol: f64) -> Result<Sections> {
    check_symmetric(t)?;
    let (values, vectors) = sorted_eigen(t);
    let radius = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let threshold = kernel_tol * radius;
    let mut nonzero = Vec::new();
    let mut kernel_cols = Vec::new();
    for (k, &lambda) in values.iter().enumerate() {
        if lambda.abs() <= threshold {
            kernel_cols.push(vectors.column(k).into_owned());
        } else {
            nonzero.push(lambda);
        }
    }
    let mu = mu(&nonzero, rho, f64::NEG_INFINITY)?;
    let index = nonzero.iter().filter(|v| **v < 0.0).count();
    let kernel = if kernel_cols.is_empty() {
        DMatrix::zeros(t.nrows(), 0)
    } else {
        DMatrix::from_columns(&kernel_cols)
    };
    let s_sign = if kernel_cols.is_empty() { mu.signum() as i8 } else { 0 };
    Ok(Sections {
        index,
        mu,
        s_sign,
        t_sign: 1,
        kernel,
    })
}

fn check_symmetric(t: &DMatrix<f64>) -> Result<()> {
    if !t.is_square() {
        return Err(Error::Domain(format!(
            "operator must be square, got {}×{}",
            t.nrows(),
            t.ncols()
        )));
    }
    let scale = t.amax().max(1.0);
    let defect = (t - t.transpose()).amax();
    if defect > 1e-10 * scale {
        return Err(Error::Domain(format!("operator is not symmetric (defect {defect:.3e})")));
    }
    Ok(())
}

/// The section `s(T)` transported into the top exterior power of the kernel of the
/// stabilized operator `(x, ξ) ↦ Tx + Φξ`, read off as a single coordinate.
///
/// The determinant line of `T` is identified with `Λᵏ ker T̂` (`k` the number of
/// columns of `Φ`); an element `w_1 ∧ … ∧ w_k` is recorded as
/// `det[⟨r_i, w_j⟩]` against the fixed frame `r_i = (Φe_i, e_i)`. This scalar is
/// continuous in `T` on the set where `T̂` is onto, even where the kernel of `T`
/// changes dimension.
pub fn stabilized_section(
    t: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    rho: &CutoffRho,
    kernel_tol: f64,
) -> Result<f64> {
    check_symmetric(t)?;
    let n = t.nrows();
    let k = phi.ncols();
    if phi.nrows() != n {
        return Err(Error::Domain(format!(
            "stabilizer has {} rows, operator has {n}",
            phi.nrows()
        )));
    }
    let sec = sections(t, rho, kernel_tol)?;
    let v = &sec.kernel;
    let l = v.ncols();
    if l > k {
        return Err(Error::Precondition(format!(
            "stabilizer of rank ≤ {k} cannot cover a {l}-dimensional cokernel"
        )));
    }
    // B = VᵀΦ maps ℝᵏ onto the cokernel; split ℝᵏ = span(Y) ⊕ ker B with BY = I.
    let b = v.transpose() * phi;
    let (y, z) = if l == 0 {
        (DMatrix::zeros(k, 0), DMatrix::identity(k, k))
    } else {
        let gram = &b * b.transpose();
        let gram_inv = gram.clone().lu().try_inverse().filter(|_| {
            SymmetricEigen::new(gram.clone()).eigenvalues.min() > 1e-20
        });
        let Some(gram_inv) = gram_inv else {
            return Err(Error::Precondition(
                "stabilized operator is not onto: the stabilizer misses the cokernel".into(),
            ));
        };
        let y = b.transpose() * gram_inv;
        // ker B: eigenvectors of BᵀB for its k − l smallest eigenvalues.
        let (_, vecs) = sorted_eigen(&(b.transpose() * &b));
        (y, vecs.columns(0, k - l).into_owned())
    };
    let pseudo = pseudo_inverse_off_kernel(t, v);
    let mut frame_vectors: Vec<DVector<f64>> = Vec::with_capacity(k);
    for c in v.column_iter() {
        let mut w = DVector::zeros(n + k);
        w.rows_mut(0, n).copy_from(&c);
        frame_vectors.push(w);
    }
    for zeta in z.column_iter() {
        let xi = -(&pseudo * (phi * zeta));
        let mut w = DVector::zeros(n + k);
        w.rows_mut(0, n).copy_from(&xi);
        w.rows_mut(n, k).copy_from(&zeta);
        frame_vectors.push(w);
    }
    let mut yz = DMatrix::zeros(k, k);
    yz.columns_mut(0, l).copy_from(&y);
    yz.columns_mut(l, k - l).copy_from(&z);
    let det_yz = if k == 0 { 1.0 } else { yz.determinant() };
    let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
    let coordinate = DMatrix::from_fn(k, k, |i, j| {
        let w = &frame_vectors[j];
        phi.column(i).dot(&w.rows(0, n)) + w[n + i]
    });
    let det_w = if k == 0 { 1.0 } else { coordinate.determinant() };
    Ok(sign * sec.mu / det_yz * det_w)
}

/// `T⁺` on the orthogonal complement of the kernel columns `v`.
fn pseudo_inverse_off_kernel(t: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = t.nrows();
    let projector = DMatrix::identity(n, n) - v * v.transpose();
    // (T + VVᵀ) is invertible and agrees with T off the kernel.
    let shifted = t + v * v.transpose();
    let inv = shifted
        .lu()
        .try_inverse()
        .unwrap_or_else(|| DMatrix::zeros(n, n));
    &projector * inv * &projector
}

/// Position of mode `e_n`, `|n| ≤ n_modes`, in the truncated basis.
pub fn mode_index(n: i64, n_modes: usize) -> usize {
    (n + n_modes as i64) as usize
}

fn mode_dim(n_modes: usize) -> usize {
    2 * n_modes + 1
}

/// First rotation stage, `σ ∈ [0, 1/2]`: turns `e_{−n}` towards `−e_{n+1}`.
/// The pair leaving the window (`e_{−N}`) is frozen.
fn stage_one(sigma: f64, n_modes: usize) -> DMatrix<f64> {
    let d = mode_dim(n_modes);
    let mut v = DMatrix::identity(d, d);
    let (s, c) = (PI * sigma).sin_cos();
    for n in 0..n_modes as i64 {
        let i = mode_index(-n, n_modes);
        let j = mode_index(n + 1, n_modes);
        v[(i, i)] = c;
        v[(j, i)] = -s;
        v[(i, j)] = s;
        v[(j, j)] = c;
    }
    v
}

/// Second rotation stage, `σ ∈ [0, 1/2]`: turns `e_{−n}` towards `e_n`, `n ≥ 1`.
fn stage_two(sigma: f64, n_modes: usize) -> DMatrix<f64> {
    let d = mode_dim(n_modes);
    let mut v = DMatrix::identity(d, d);
    let (s, c) = (PI * sigma).sin_cos();
    for n in 1..=n_modes as i64 {
        let i = mode_index(-n, n_modes);
        let j = mode_index(n, n_modes);
        v[(i, i)] = c;
        v[(j, i)] = s;
        v[(i, j)] = -s;
        v[(j, j)] = c;
    }
    v
}

/// `V_σ`, `σ ∈ [0, 1]`: identity at `0`, the shift `e_n ↦ e_{n−1}` at `1`.
fn rotation_path(sigma: f64, n_modes: usize) -> DMatrix<f64> {
    if sigma <= 0.5 {
        stage_one(sigma, n_modes)
    } else {
        stage_two(sigma - 0.5, n_modes) * stage_one(0.5, n_modes)
    }
}

/// The truncated orthogonal path `U_τ = V_{2−τ}`, `τ ∈ [1, 2]`, from the shift to the identity.
pub fn bernd_unitary(tau: f64, n_modes: usize) -> Result<DMatrix<f64>> {
    if !(1.0..=2.0).contains(&tau) {
        return Err(Error::Domain(format!("τ must lie in [1, 2], got {tau}")));
    }
    if n_modes < 4 {
        return Err(Error::Domain(format!("truncation needs at least 4 modes, got {n_modes}")));
    }
    Ok(rotation_path(2.0 - tau, n_modes))
}

/// The stabilized counterexample loop at a finite truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorFamily {
    pub n_modes: usize,
    /// Initial number of uniform steps on `[0, 2]`; refined adaptively.
    pub steps: usize,
    /// Stabilization `G = a e₀ + b e₁`.
    pub a: f64,
    pub b: f64,
}

impl OperatorFamily {
    pub fn new(n_modes: usize, steps: usize, a: f64, b: f64) -> Result<Self> {
        if n_modes < 4 {
            return Err(Error::Config(format!("truncation needs at least 4 modes, got {n_modes}")));
        }
        if steps < 2 {
            return Err(Error::Config(format!("need at least 2 steps, got {steps}")));
        }
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Config(format!(
                "stabilization weights must be positive, got a = {a}, b = {b}"
            )));
        }
        Ok(Self {
            n_modes,
            steps,
            a,
            b,
        })
    }

    fn dim(&self) -> usize {
        mode_dim(self.n_modes)
    }

    /// The truncated `T_τ`: `diag(π(n − τ))` on `[0, 1]`, `U_τᵀ diag(πn) U_τ` on `[1, 2]`.
    pub fn operator(&self, tau: f64) -> Result<DMatrix<f64>> {
        if !(0.0..=2.0).contains(&tau) {
            return Err(Error::Domain(format!("τ must lie in [0, 2], got {tau}")));
        }
        let n = self.n_modes as i64;
        if tau <= 1.0 {
            let diag = DVector::from_iterator(self.dim(), (-n..=n).map(|k| PI * (k as f64 - tau)));
            return Ok(DMatrix::from_diagonal(&diag));
        }
        let u = bernd_unitary(tau, self.n_modes)?;
        let diag = DVector::from_iterator(self.dim(), (-n..=n).map(|k| PI * k as f64));
        Ok(u.transpose() * DMatrix::from_diagonal(&diag) * u)
    }

    pub fn stabilizer(&self) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        g[mode_index(0, self.n_modes)] = self.a;
        g[mode_index(1, self.n_modes)] = self.b;
        g
    }

    /// `[T_τ | G]`.
    pub fn stabilized(&self, tau: f64) -> Result<DMatrix<f64>> {
        let t = self.operator(tau)?;
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d + 1);
        out.view_mut((0, 0), (d, d)).copy_from(&t);
        out.set_column(d, &self.stabilizer());
        Ok(out)
    }

    /// Unit kernel element `(f, ζ)` of the stabilized operator.
    pub fn kernel(&self, tau: f64) -> Result<DVector<f64>> {
        let t_hat = self.stabilized(tau)?;
        let d = self.dim();
        let mut square = DMatrix::zeros(d + 1, d + 1);
        square.view_mut((0, 0), (d, d + 1)).copy_from(&t_hat);
        let svd = square.svd(false, true);
        let mut order: Vec<usize> = (0..d + 1).collect();
        order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        let second = svd.singular_values[order[1]];
        if second <= 1e-8 {
            return Err(Error::Tracking {
                tau,
                reason: format!(
                    "stabilized operator is not onto (second singular value {second:.3e})"
                ),
            });
        }
        let vt = svd.v_t.expect("requested");
        Ok(vt.row(order[0]).transpose())
    }

    /// The kernel direction in closed form, normalized to unit length.
    ///
    /// On `[0, 1]`: `f = a(τ−1)e₀ + bτe₁`, `ζ = πτ(τ−1)`. On `[1, 2]`: `ζ = 0` and
    /// `f = κ(τ)U_τ⁻¹e₀` with `κ = b(2−τ) + a(τ−1)`, where `U_τ⁻¹e₀ = e₁` up to
    /// `τ = 3/2` and `cos(πσ)e₀ + sin(πσ)e₁`, `σ = 2 − τ`, after.
    pub fn closed_form(&self, tau: f64) -> DVector<f64> {
        let d = self.dim();
        let (i0, i1) = (mode_index(0, self.n_modes), mode_index(1, self.n_modes));
        let mut out = DVector::zeros(d + 1);
        if tau <= 1.0 {
            out[i0] = self.a * (tau - 1.0);
            out[i1] = self.b * tau;
            out[d] = PI * tau * (tau - 1.0);
        } else {
            let kappa = self.b * (2.0 - tau) + self.a * (tau - 1.0);
            if tau <= 1.5 {
                out[i1] = kappa;
            } else {
                let (s, c) = (PI * (2.0 - tau)).sin_cos();
                out[i0] = kappa * c;
                out[i1] = kappa * s;
            }
        }
        let norm = out.norm();
        out / norm
    }
}

/// One row of the kernel trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub tau: f64,
    pub c_m2: f64,
    pub c_m1: f64,
    pub c_0: f64,
    pub c_1: f64,
    pub c_2: f64,
    pub zeta: f64,
    /// `|⟨numeric, closed form⟩|` of the unit kernel directions.
    pub alignment: f64,
}

#[derive(Debug, Clone)]
pub struct HolonomyReport {
    /// Sign of `⟨k(2), k(0)⟩` for the continuously tracked kernel element `k`.
    pub sign: i8,
    pub trace: Vec<TraceRow>,
    /// Smallest alignment with the closed-form section over the loop.
    pub min_alignment: f64,
    /// Smallest overlap between consecutive tracked kernel elements.
    pub min_step_overlap: f64,
}

const STEP_OVERLAP: f64 = 0.99;
const MAX_REFINEMENT: u32 = 20;

/// Track a unit kernel element of the stabilized loop from `τ = 0` to `τ = 2`.
///
/// Consecutive elements are sign-aligned; a step whose overlap drops below `0.99`
/// is bisected until it does not.
pub fn holonomy(family: &OperatorFamily) -> Result<HolonomyReport> {
    let d = family.dim();
    let n = family.n_modes;
    let row = |tau: f64, k: &DVector<f64>| {
        let closed = family.closed_form(tau);
        TraceRow {
            tau,
            c_m2: k[mode_index(-2, n)],
            c_m1: k[mode_index(-1, n)],
            c_0: k[mode_index(0, n)],
            c_1: k[mode_index(1, n)],
            c_2: k[mode_index(2, n)],
            zeta: k[d],
            alignment: k.dot(&closed).abs(),
        }
    };

    let mut current = family.kernel(0.0)?;
    let start = current.clone();
    let mut trace = vec![row(0.0, &current)];
    let mut min_overlap = 1.0_f64;
    let h = 2.0 / family.steps as f64;
    for step in 0..family.steps {
        let (t0, t1) = (step as f64 * h, ((step + 1) as f64 * h).min(2.0));
        let mut stack = vec![(t1, 0_u32)];
        let mut at = t0;
        while let Some((target, depth)) = stack.pop() {
            let mut next = family.kernel(target)?;
            let overlap = next.dot(&current);
            if overlap.abs() < STEP_OVERLAP {
                if depth >= MAX_REFINEMENT {
                    return Err(Error::Tracking {
                        tau: target,
                        reason: format!("kernel jumps (overlap {overlap:.3}) under refinement"),
                    });
                }
                stack.push((target, depth + 1));
                stack.push((0.5 * (at + target), depth + 1));
                continue;
            }
            if overlap < 0.0 {
                next = -next;
            }
            min_overlap = min_overlap.min(overlap.abs());
            current = next;
            at = target;
        }
        trace.push(row(t1, &current));
    }
    let sign = if current.dot(&start) < 0.0 { -1 } else { 1 };
    let min_alignment = trace.iter().map(|r| r.alignment).fold(1.0, f64::min);
    Ok(HolonomyReport {
        sign,
        trace,
        min_alignment,
        min_step_overlap: min_overlap,
    })
}

//! Loops `z: ℝ/2ℤ → ℝ` stored as coefficients in a symmetry-adapted trigonometric basis.
//!
//! Inner products are normalized so that `⟨f, g⟩ = ½∫₀² f g`, which equals `∫₀¹ f g`
//! for both symmetric classes. All L² quantities are evaluated exactly: linear ones
//! from the coefficients, the quartic ones by quadrature on a grid fine enough that
//! every product is integrated without aliasing.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which symmetries a loop is required to have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryClass {
    /// `−z(1+τ) = z(τ) = z(1−τ)`, basis `sin((2k−1)πτ)`, `k ≥ 1`.
    OddSine,
    /// `z(1+τ) = z(τ) = z(1−τ)`, basis `cos(2kπτ)`, `k ≥ 0`.
    EvenCosine,
    /// Period 2 only, basis `1, cos(πτ), sin(πτ), cos(2πτ), sin(2πτ), …`.
    Full,
}

impl SymmetryClass {
    /// Frequency of basis function `k` (0-based) in units of π.
    pub fn harmonic(self, k: usize) -> usize {
        match self {
            Self::OddSine => 2 * k + 1,
            Self::EvenCosine => 2 * k,
            Self::Full => k.div_ceil(2),
        }
    }

    /// Angular frequency `ω_k` of basis function `k`.
    pub fn frequency(self, k: usize) -> f64 {
        self.harmonic(k) as f64 * PI
    }

    pub fn is_cosine(self, k: usize) -> bool {
        match self {
            Self::OddSine => false,
            Self::EvenCosine => true,
            Self::Full => k == 0 || k % 2 == 1,
        }
    }

    /// `⟨e_k, e_k⟩`.
    pub fn norm_sq(self, k: usize) -> f64 {
        if self.harmonic(k) == 0 {
            1.0
        } else {
            0.5
        }
    }

    /// Basis function `k` at `tau`.
    pub fn basis(self, k: usize, tau: f64) -> f64 {
        let arg = self.frequency(k) * tau;
        if self.is_cosine(k) {
            arg.cos()
        } else {
            arg.sin()
        }
    }

    /// Derivative of basis function `k` at `tau`.
    pub fn basis_derivative(self, k: usize, tau: f64) -> f64 {
        let w = self.frequency(k);
        if self.is_cosine(k) {
            -w * (w * tau).sin()
        } else {
            w * (w * tau).cos()
        }
    }

    /// Largest harmonic present with `n` coefficients.
    pub fn max_harmonic(self, n: usize) -> usize {
        (0..n).map(|k| self.harmonic(k)).max().unwrap_or(0)
    }

    /// Smallest grid (multiple of 4, at least `4n`) on which quartic products of a loop
    /// with `n` coefficients integrate exactly.
    pub fn dealiased_len(self, n: usize) -> usize {
        round_up4((4 * n).max(4 * self.max_harmonic(n) + 4))
    }

    /// Whether the samples on a uniform period-2 grid respect the symmetries, up to `tol`.
    fn symmetry_defect(self, samples: &[f64]) -> f64 {
        let m = samples.len();
        let half = m / 2;
        let mut defect: f64 = 0.0;
        for j in 0..m {
            let shifted = samples[(j + half) % m];
            let reflected = samples[(half + m - j) % m];
            let z = samples[j];
            defect = match self {
                Self::OddSine => defect.max((shifted + z).abs()).max((reflected - z).abs()),
                Self::EvenCosine => defect.max((shifted - z).abs()).max((reflected - z).abs()),
                Self::Full => defect,
            };
        }
        defect
    }
}

fn round_up4(m: usize) -> usize {
    m.div_ceil(4) * 4
}

/// `τ_j = 2j/M`.
pub fn grid_point(j: usize, m: usize) -> f64 {
    2.0 * j as f64 / m as f64
}

/// A loop in a symmetry class: coefficients plus their samples on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Loop {
    class: SymmetryClass,
    coeffs: Vec<f64>,
    samples: Vec<f64>,
    derivative_of: Option<SymmetryClass>,
}

/// The L² quantities used throughout: `‖z‖`, `‖z'‖`, `‖z²‖` and the sup norm `‖z‖₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    pub l2_deriv: f64,
    pub l2_square: f64,
    pub sup: f64,
}

/// Serialized form of a loop; the grid is regenerated on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopRecord {
    pub class: SymmetryClass,
    pub coeffs: Vec<f64>,
}

impl Loop {
    /// A loop on the default grid for its size.
    pub fn new(class: SymmetryClass, coeffs: Vec<f64>) -> Result<Self> {
        let m = class.dealiased_len(coeffs.len().max(1));
        Self::with_grid(class, coeffs, m)
    }

    /// A loop sampled on `m` points; `m` must be a multiple of 4 and at least `4N`.
    pub fn with_grid(class: SymmetryClass, coeffs: Vec<f64>, m: usize) -> Result<Self> {
        let n = coeffs.len();
        if n == 0 {
            return Err(Error::Domain("a loop needs at least one coefficient".into()));
        }
        if m % 4 != 0 || m < 4 * n {
            return Err(Error::Config(format!(
                "grid length {m} must be a multiple of 4 and at least 4N = {}",
                4 * n
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("non-finite coefficient".into()));
        }
        let samples = synthesize(class, &coeffs, m);
        Ok(Self {
            class,
            coeffs,
            samples,
            derivative_of: None,
        })
    }

    /// The basis function `e_k` of a class as a loop.
    pub fn basis(class: SymmetryClass, n: usize, k: usize) -> Result<Self> {
        let mut coeffs = vec![0.0; n];
        coeffs[k] = 1.0;
        Self::new(class, coeffs)
    }

    pub fn class(&self) -> SymmetryClass {
        self.class
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn grid_len(&self) -> usize {
        self.samples.len()
    }

    /// For a derivative loop, the class of the loop that was differentiated.
    pub fn derivative_of(&self) -> Option<SymmetryClass> {
        self.derivative_of
    }

    /// Same class and grid, new coefficients.
    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<Self> {
        Self::with_grid(self.class, coeffs, self.grid_len())
    }

    /// Grid length used for nonlinear quadratures.
    pub fn quadrature_len(&self) -> usize {
        self.grid_len().max(self.class.dealiased_len(self.modes()))
    }

    pub fn eval(&self, tau: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * self.class.basis(k, tau))
            .sum()
    }

    pub fn eval_derivative(&self, tau: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * self.class.basis_derivative(k, tau))
            .sum()
    }

    pub fn eval_second_derivative(&self, tau: f64) -> f64 {
        -self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * self.class.frequency(k).powi(2) * self.class.basis(k, tau))
            .sum::<f64>()
    }

    /// Values on a uniform grid of `m` points over `[0, 2)`.
    pub fn samples_on(&self, m: usize) -> Vec<f64> {
        if m == self.grid_len() {
            self.samples.clone()
        } else {
            synthesize(self.class, &self.coeffs, m)
        }
    }

    /// `‖z‖²`.
    pub fn l2_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| self.class.norm_sq(k) * c * c)
            .sum()
    }

    /// `‖z'‖²`.
    pub fn deriv_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| self.class.norm_sq(k) * (self.class.frequency(k) * c).powi(2))
            .sum()
    }

    /// `‖z²‖² = ⟨z⁴⟩`.
    pub fn square_sq(&self) -> f64 {
        mean(self.samples_on(self.quadrature_len()).iter().map(|z| z.powi(4)))
    }

    /// `‖z²‖ / ‖z‖²`-free mean of an arbitrary function of the samples.
    pub fn mean_of<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        mean(self.samples_on(self.quadrature_len()).into_iter().map(f))
    }

    pub fn norms(&self) -> Norms {
        Norms {
            l2: self.l2_sq().sqrt(),
            l2_deriv: self.deriv_sq().sqrt(),
            l2_square: self.square_sq().sqrt(),
            sup: self.sup_norm(),
        }
    }

    /// `‖z‖₀ = max |z|`: dense scan, golden-section refinement, Newton polish on `z'`.
    pub fn sup_norm(&self) -> f64 {
        let m = self.grid_len().max(16 * self.class.max_harmonic(self.modes()) + 16);
        let samples = self.samples_on(m);
        let h = 2.0 / m as f64;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| samples[j].abs().total_cmp(&samples[i].abs()));
        let abs = |t: f64| self.eval(t).abs();
        order
            .iter()
            .take(4)
            .map(|&j| {
                let t0 = grid_point(j, m);
                let mut t = golden_max(&abs, t0 - h, t0 + h, 1e-10);
                for _ in 0..3 {
                    let d2 = self.eval_second_derivative(t);
                    if d2 == 0.0 {
                        break;
                    }
                    let next = t - self.eval_derivative(t) / d2;
                    if (next - t0).abs() > h || abs(next) < abs(t) {
                        break;
                    }
                    t = next;
                }
                abs(t).max(samples[j].abs())
            })
            .fold(0.0, f64::max)
    }

    /// The exact derivative. Symmetric classes map into the full basis.
    pub fn derivative(&self) -> Loop {
        let k_max = self.class.max_harmonic(self.modes());
        let n_full = 2 * k_max + 1;
        let mut out = vec![0.0; n_full];
        for (k, &c) in self.coeffs.iter().enumerate() {
            let j = self.class.harmonic(k);
            let w = j as f64 * PI;
            if j == 0 {
                continue;
            }
            if self.class.is_cosine(k) {
                out[2 * j] += -w * c;
            } else {
                out[2 * j - 1] += w * c;
            }
        }
        let m = self.grid_len().max(SymmetryClass::Full.dealiased_len(n_full));
        let mut d = Loop::with_grid(SymmetryClass::Full, out, m).expect("valid derivative grid");
        d.derivative_of = match self.class {
            SymmetryClass::Full => self.derivative_of,
            class => Some(class),
        };
        d
    }

    /// The same loop written in the full period-2 basis.
    pub fn to_full(&self) -> Loop {
        if self.class == SymmetryClass::Full {
            return self.clone();
        }
        let k_max = self.class.max_harmonic(self.modes());
        let mut out = vec![0.0; 2 * k_max + 1];
        for (k, &c) in self.coeffs.iter().enumerate() {
            let j = self.class.harmonic(k);
            let idx = if j == 0 {
                0
            } else if self.class.is_cosine(k) {
                2 * j - 1
            } else {
                2 * j
            };
            out[idx] += c;
        }
        Loop::new(SymmetryClass::Full, out).expect("valid embedding")
    }

    /// `z_n(τ) = n^{−1/3} z(nτ)`.
    pub fn rescale_cover(&self, n: usize) -> Result<Loop> {
        if n == 0 {
            return Err(Error::Domain("cover degree must be positive".into()));
        }
        if self.class == SymmetryClass::OddSine && n % 2 == 0 {
            return Err(Error::ClassMismatch(format!(
                "an even cover (n = {n}) of an odd-sine loop is not odd-sine"
            )));
        }
        let scale = (n as f64).powf(-1.0 / 3.0);
        let new_len = match self.class {
            SymmetryClass::OddSine => ((2 * self.modes() - 1) * n + 1) / 2,
            SymmetryClass::EvenCosine => (self.modes() - 1) * n + 1,
            SymmetryClass::Full => {
                let k_max = self.class.max_harmonic(self.modes());
                2 * k_max * n + 1
            }
        };
        let mut out = vec![0.0; new_len];
        for (k, &c) in self.coeffs.iter().enumerate() {
            let idx = match self.class {
                SymmetryClass::OddSine => ((2 * k + 1) * n - 1) / 2,
                SymmetryClass::EvenCosine => k * n,
                SymmetryClass::Full => {
                    let j = self.class.harmonic(k) * n;
                    match (j, self.class.is_cosine(k)) {
                        (0, _) => 0,
                        (j, true) => 2 * j - 1,
                        (j, false) => 2 * j,
                    }
                }
            };
            out[idx] = scale * c;
        }
        Loop::new(self.class, out)
    }

    /// Project samples on a uniform grid of `[0, 2)` onto a class basis.
    pub fn analyze(samples: &[f64], class: SymmetryClass) -> Result<Loop> {
        let scale = samples.iter().fold(1.0_f64, |a, z| a.max(z.abs()));
        Self::analyze_with_tolerance(samples, class, 1e-9 * scale)
    }

    /// As [`Loop::analyze`], with an explicit symmetry tolerance; keeps `M/4` modes.
    pub fn analyze_with_tolerance(samples: &[f64], class: SymmetryClass, tol: f64) -> Result<Loop> {
        let m = samples.len();
        if m == 0 || m % 4 != 0 {
            return Err(Error::Config(format!(
                "sample count {m} must be a positive multiple of 4"
            )));
        }
        let defect = class.symmetry_defect(samples);
        if defect > tol {
            return Err(Error::ClassMismatch(format!(
                "samples violate the {class:?} symmetry by {defect:.3e}"
            )));
        }
        let n = m / 4;
        let coeffs = project(samples, class, n);
        Loop::with_grid(class, coeffs, m)
    }

    pub fn to_record(&self) -> LoopRecord {
        LoopRecord {
            class: self.class,
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn from_record(record: LoopRecord) -> Result<Self> {
        Self::new(record.class, record.coeffs)
    }
}

impl Serialize for Loop {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Loop {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let record = LoopRecord::deserialize(d)?;
        Loop::from_record(record).map_err(serde::de::Error::custom)
    }
}

fn mean<I: Iterator<Item = f64>>(values: I) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    sum / count as f64
}

fn synthesize(class: SymmetryClass, coeffs: &[f64], m: usize) -> Vec<f64> {
    (0..m)
        .map(|j| {
            let tau = grid_point(j, m);
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * class.basis(k, tau))
                .sum()
        })
        .collect()
}

/// Discrete projection `c_k = ⟨z, e_k⟩ / ⟨e_k, e_k⟩` with the grid quadrature.
pub fn project(samples: &[f64], class: SymmetryClass, n: usize) -> Vec<f64> {
    let m = samples.len();
    (0..n)
        .map(|k| {
            let s: f64 = samples
                .iter()
                .enumerate()
                .map(|(j, z)| z * class.basis(k, grid_point(j, m)))
                .sum();
            s / (m as f64 * class.norm_sq(k))
        })
        .collect()
}

/// Values of every basis function on a grid: row `j` is `τ_j`, column `k` is `e_k`.
pub fn basis_table(class: SymmetryClass, n: usize, m: usize) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(m, n, |j, k| class.basis(k, grid_point(j, m)))
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

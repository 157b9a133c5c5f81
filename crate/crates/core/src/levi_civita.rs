//! The Levi-Civita transformation `q(t) = z(τ_z(t))²`.
//!
//! A loop `z` defines the time map `t_z(τ) = ‖z‖⁻² ∫₀^τ z²`, a homeomorphism of the
//! circle that is stationary exactly at the zeros of `z`. Composing `z²` with its
//! inverse gives a collision orbit `q ≥ 0` whose zeros are the collisions. The
//! inverse direction recovers `z` up to sign from `q` through `τ_q(t) = ‖z‖² ∫₀^t dt/q`.
//!
//! Near a simple zero `t_*` of `q` the orbit behaves like `|t − t_*|^{2/3}`. In the
//! variable `s = (t − t_*)^{1/3}` it is smooth, `q = s² G(s)` with `G > 0`, and
//! `dt/q = 3 ds / G(s)`. All integrals and inversions near collisions are done in `s`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loops::{project, Loop, SymmetryClass};
use crate::quadrature::GaussLegendre;

/// Default number of uniform `t` samples per period of an orbit.
pub const ORBIT_SAMPLES: usize = 8192;
/// Collisions derivatives are only trusted where `q ≥ SAFE_FRACTION · max q`.
pub const SAFE_FRACTION: f64 = 0.05;

const WINDOW: i64 = 48;
const MIN_WINDOW: i64 = 12;
const FIT_DEGREE: usize = 30;

/// A real trigonometric polynomial `c₀ + Σ_j (a_j cos jπτ + b_j sin jπτ)`.
#[derive(Debug, Clone)]
struct TrigSeries {
    c0: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl TrigSeries {
    /// From coefficients in the full basis `1, cos πτ, sin πτ, cos 2πτ, …`.
    fn from_full(coeffs: &[f64]) -> Self {
        let k = (coeffs.len().saturating_sub(1)).div_ceil(2);
        let get = |i: usize| coeffs.get(i).copied().unwrap_or(0.0);
        Self {
            c0: get(0),
            cos: (1..=k).map(|j| get(2 * j - 1)).collect(),
            sin: (1..=k).map(|j| get(2 * j)).collect(),
        }
    }

    /// Value and first two derivatives, by the angle-addition recurrence.
    fn eval(&self, tau: f64) -> (f64, f64, f64) {
        let (s1, c1) = (PI * tau).sin_cos();
        let (mut s, mut c) = (s1, c1);
        let (mut v, mut d, mut dd) = (self.c0, 0.0, 0.0);
        for (j, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let w = (j + 1) as f64 * PI;
            v += a * c + b * s;
            d += w * (b * c - a * s);
            dd -= w * w * (a * c + b * s);
            let next = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = next;
        }
        (v, d, dd)
    }

    fn value(&self, tau: f64) -> f64 {
        self.eval(tau).0
    }

    /// `∫₀^τ` of the series.
    fn integral(&self, tau: f64) -> f64 {
        let (s1, c1) = (PI * tau).sin_cos();
        let (mut s, mut c) = (s1, c1);
        let mut v = self.c0 * tau;
        for (j, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let w = (j + 1) as f64 * PI;
            v += (a * s + b * (1.0 - c)) / w;
            let next = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = next;
        }
        v
    }
}

/// `z` and `z²` as series, with `‖z‖²` and the period of `t_z`.
#[derive(Debug, Clone)]
struct LoopTime {
    z: TrigSeries,
    square: TrigSeries,
    norm_sq: f64,
    period: f64,
}

impl LoopTime {
    fn new(z: &Loop) -> Result<Self> {
        let norm_sq = z.l2_sq();
        let scale = z.coeffs().iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        if !(norm_sq > 1e-14 * scale.max(1.0).powi(2)) {
            return Err(Error::DegenerateLoop(
                "z vanishes identically, so t_z is undefined".into(),
            ));
        }
        let full = z.to_full();
        let series = TrigSeries::from_full(full.coeffs());
        let k_max = series.cos.len();
        let m = 8 * k_max + 8;
        let squares: Vec<f64> = (0..m)
            .map(|j| series.value(2.0 * j as f64 / m as f64).powi(2))
            .collect();
        let square = TrigSeries::from_full(&project(&squares, SymmetryClass::Full, 4 * k_max + 1));
        let period = match z.class() {
            SymmetryClass::Full => 2.0,
            _ => 1.0,
        };
        Ok(Self {
            z: series,
            square,
            norm_sq,
            period,
        })
    }

    fn t(&self, tau: f64) -> f64 {
        self.square.integral(tau) / self.norm_sq
    }

    fn slope(&self, tau: f64) -> f64 {
        self.z.value(tau).powi(2) / self.norm_sq
    }

    /// Zeros of `z` in `[0, period)`.
    fn zeros(&self) -> Vec<f64> {
        let k_max = self.z.cos.len().max(1);
        let n = 64 * k_max;
        let h = self.period / n as f64;
        let vals: Vec<f64> = (0..=n).map(|i| self.z.value(i as f64 * h)).collect();
        let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tiny = 1e-14 * scale;
        let mut out = Vec::new();
        for i in 0..n {
            let (a, b) = (vals[i], vals[i + 1]);
            if a.abs() <= tiny {
                out.push(i as f64 * h);
            } else if b.abs() > tiny && a.signum() != b.signum() {
                out.push(self.refine_zero(i as f64 * h, (i + 1) as f64 * h));
            }
        }
        out
    }

    fn refine_zero(&self, mut lo: f64, mut hi: f64) -> f64 {
        let f_lo = self.z.value(lo);
        let mut x = 0.5 * (lo + hi);
        for _ in 0..100 {
            let (v, d, _) = self.z.eval(x);
            if v == 0.0 {
                return x;
            }
            if v.signum() == f_lo.signum() {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - v / d;
            x = if d != 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-15 || (v / d).abs() < 1e-16 {
                break;
            }
        }
        x
    }

    /// `τ` with `t_z(τ) = t`, bracketed in `[lo, hi]`.
    fn solve_tau(&self, t: f64, mut lo: f64, mut hi: f64) -> f64 {
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.t(x) - t;
            if f == 0.0 {
                return x;
            }
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.slope(x);
            let newton = x - f / d;
            let next = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() < 1e-16 || hi - lo < 1e-16 {
                return next;
            }
            x = next;
        }
        x
    }
}

/// A monotone map of `[0, P]` onto itself given by nodes and slopes, evaluated with
/// piecewise cubic Hermite interpolation; extended to `ℝ` by `t(τ + P) = t(τ) + P`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMap {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
    inverted: bool,
}

impl TimeMap {
    /// Nodes with Fritsch–Carlson slopes.
    pub fn from_nodes(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InvalidMap("need at least two nodes of matching length".into()));
        }
        let secant: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = secant[0];
        slopes[n - 1] = secant[n - 2];
        for i in 1..n - 1 {
            let (a, b) = (secant[i - 1], secant[i]);
            slopes[i] = if a * b <= 0.0 { 0.0 } else { 0.5 * (a + b) };
        }
        Self::from_nodes_with_slopes(x, y, slopes)
    }

    /// Nodes with given slopes; slopes are limited only where they would break monotonicity.
    pub fn from_nodes_with_slopes(x: Vec<f64>, y: Vec<f64>, mut slopes: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n || slopes.len() != n {
            return Err(Error::InvalidMap("need at least two nodes of matching length".into()));
        }
        if x[0] != 0.0 || y[0] != 0.0 {
            return Err(Error::InvalidMap("the map must fix 0".into()));
        }
        if (y[n - 1] - x[n - 1]).abs() > 1e-12 * x[n - 1] {
            return Err(Error::InvalidMap(format!(
                "the map must fix the period endpoint, got {} ↦ {}",
                x[n - 1],
                y[n - 1]
            )));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidMap("nodes must be strictly increasing".into()));
        }
        for i in 0..n - 1 {
            let delta = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
            if delta > 0.0 {
                let (a, b) = (slopes[i] / delta, slopes[i + 1] / delta);
                let r2 = a * a + b * b;
                if r2 > 9.0 + 1e-9 {
                    let f = 3.0 / r2.sqrt();
                    slopes[i] = f * a * delta;
                    slopes[i + 1] = f * b * delta;
                }
            }
        }
        Ok(Self {
            x,
            y,
            slopes,
            inverted: false,
        })
    }

    pub fn identity(period: f64) -> Self {
        Self {
            x: vec![0.0, period],
            y: vec![0.0, period],
            slopes: vec![1.0, 1.0],
            inverted: false,
        }
    }

    pub fn period(&self) -> f64 {
        *self.x.last().expect("nonempty")
    }

    pub fn is_inverse(&self) -> bool {
        self.inverted
    }

    /// `(τ, t)` nodes of the underlying forward map.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.y.iter().copied())
    }

    /// Slope of the forward map at node `i`.
    pub fn node_slope(&self, i: usize) -> f64 {
        self.slopes[i]
    }

    fn hermite(&self, i: usize, x: f64) -> (f64, f64) {
        let h = self.x[i + 1] - self.x[i];
        let u = (x - self.x[i]) / h;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let u2 = u * u;
        let u3 = u2 * u;
        let v = (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * m0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * m1;
        let d = ((6.0 * u2 - 6.0 * u) * y0
            + (3.0 * u2 - 4.0 * u + 1.0) * m0
            + (-6.0 * u2 + 6.0 * u) * y1
            + (3.0 * u2 - 2.0 * u) * m1)
            / h;
        (v, d)
    }

    fn forward_in_period(&self, x: f64) -> f64 {
        let i = interval(&self.x, x);
        self.hermite(i, x).0
    }

    fn inverse_in_period(&self, y: f64) -> f64 {
        let i = interval(&self.y, y);
        let (mut lo, mut hi) = (self.x[i], self.x[i + 1]);
        let mut x = lo + (hi - lo) * (y - self.y[i]) / (self.y[i + 1] - self.y[i]).max(f64::MIN_POSITIVE);
        for _ in 0..200 {
            let (v, d) = self.hermite(i, x);
            let f = v - y;
            if f == 0.0 {
                break;
            }
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - f / d;
            let next = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() < 1e-15 || hi - lo < 1e-15 {
                x = next;
                break;
            }
            x = next;
        }
        x
    }

    /// Evaluate the map (or its inverse, if this map was produced by [`invert`]).
    pub fn eval(&self, arg: f64) -> f64 {
        let p = self.period();
        let k = (arg / p).floor();
        let r = arg - k * p;
        let v = if self.inverted {
            self.inverse_in_period(r)
        } else {
            self.forward_in_period(r)
        };
        k * p + v
    }
}

fn interval(nodes: &[f64], x: f64) -> usize {
    let n = nodes.len();
    match nodes.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    }
}

/// The inverse map, evaluated by bisection and Newton on the interpolant.
pub fn invert(map: &TimeMap) -> Result<TimeMap> {
    if map.y.windows(2).any(|w| !(w[1] > w[0])) || map.slopes.iter().any(|s| *s < 0.0) {
        return Err(Error::InvalidMap("the node table is not strictly increasing".into()));
    }
    let mut out = map.clone();
    out.inverted = !map.inverted;
    Ok(out)
}

fn check_zeros_are_isolated(z: &Loop) -> Result<()> {
    if z.l2_sq() <= 1e-28 {
        return Err(Error::DegenerateLoop("z vanishes identically".into()));
    }
    Ok(())
}

/// `t_z(τ) = ‖z‖⁻² ∫₀^τ z²`, tabulated with exact slopes `z²/‖z‖²`.
///
/// The nodes include the zeros of `z`, where `t_z` is stationary.
pub fn time_map(z: &Loop) -> Result<TimeMap> {
    check_zeros_are_isolated(z)?;
    let lt = LoopTime::new(z)?;
    tabulate(&lt, &lt.zeros())
}

fn tabulate(lt: &LoopTime, zeros: &[f64]) -> Result<TimeMap> {
    let k_max = lt.z.cos.len().max(1);
    let n = (16 * k_max).max(2048);
    let p = lt.period;
    let h = p / n as f64;
    let mut xs: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    xs.retain(|x| zeros.iter().all(|z0| (x - z0).abs() > 1e-3 * h || *x == *z0));
    xs.extend(zeros.iter().copied().filter(|z0| *z0 > 0.0));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut ys: Vec<f64> = xs.iter().map(|&x| lt.t(x)).collect();
    let slopes: Vec<f64> = xs.iter().map(|&x| lt.slope(x)).collect();
    ys[0] = 0.0;
    *ys.last_mut().expect("nonempty") = p;
    TimeMap::from_nodes_with_slopes(xs, ys, slopes)
}

/// `τ_z(t_j)` for `t_j = j/m`, solved on the exact `t_z`.
fn solve_times(lt: &LoopTime, map: &TimeMap, m: usize) -> Vec<f64> {
    let nodes: Vec<(f64, f64)> = map.nodes().collect();
    (0..m)
        .map(|j| {
            let t = j as f64 / m as f64;
            let i = match nodes.binary_search_by(|n| n.1.total_cmp(&t)) {
                Ok(i) => i.min(nodes.len() - 2),
                Err(i) => i.saturating_sub(1).min(nodes.len() - 2),
            };
            if nodes[i].1 == t {
                nodes[i].0
            } else {
                lt.solve_tau(t, nodes[i].0, nodes[i + 1].0)
            }
        })
        .collect()
}

/// `τ_z(j/m)` for `j = 0..m`.
pub(crate) fn inverse_times(z: &Loop, m: usize) -> Result<Vec<f64>> {
    require_symmetric(z)?;
    let lt = LoopTime::new(z)?;
    let map = tabulate(&lt, &lt.zeros())?;
    Ok(solve_times(&lt, &map, m))
}

/// Chebyshev series on `[lo, hi]`.
#[derive(Debug, Clone)]
struct Chebyshev {
    lo: f64,
    hi: f64,
    c: Vec<f64>,
}

impl Chebyshev {
    fn fit(xs: &[f64], ys: &[f64], degree: usize) -> Option<Self> {
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut proto = Self {
            lo,
            hi,
            c: vec![0.0; degree + 1],
        };
        let a = DMatrix::from_fn(xs.len(), degree + 1, |i, k| proto.basis(xs[i]).0[k]);
        let b = DVector::from_column_slice(ys);
        let c = a.svd(true, true).solve(&b, 1e-14).ok()?;
        proto.c = c.iter().copied().collect();
        Some(proto)
    }

    fn basis(&self, x: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.c.len();
        let scale = 2.0 / (self.hi - self.lo);
        let u = (2.0 * x - self.lo - self.hi) / (self.hi - self.lo);
        let mut t = vec![0.0; n];
        let mut dt = vec![0.0; n];
        t[0] = 1.0;
        if n > 1 {
            t[1] = u;
            dt[1] = scale;
        }
        for k in 2..n {
            t[k] = 2.0 * u * t[k - 1] - t[k - 2];
            dt[k] = 2.0 * scale * t[k - 1] + 2.0 * u * dt[k - 1] - dt[k - 2];
        }
        (t, dt)
    }

    fn eval(&self, x: f64) -> (f64, f64) {
        let (t, dt) = self.basis(x);
        let v = self.c.iter().zip(&t).map(|(c, t)| c * t).sum();
        let d = self.c.iter().zip(&dt).map(|(c, t)| c * t).sum();
        (v, d)
    }
}

/// A collision window: `t = t_* + s³`, `q = s² G(s)` for `s ∈ [s_lo, s_hi]`.
#[derive(Debug, Clone)]
struct Window {
    center: f64,
    lo: i64,
    hi: i64,
    s_lo: f64,
    s_hi: f64,
    g: Chebyshev,
}

impl Window {
    fn s_of(&self, u: f64) -> f64 {
        (u - self.center).cbrt()
    }
}

#[derive(Debug, Clone)]
enum Piece {
    /// Grid interval `[j h, (j + 1) h]` (unwrapped index).
    Smooth(i64),
    Window(usize),
}

/// Piecewise description of an orbit over one period `[b h, b h + 1)` with `b` a grid
/// index outside every collision window.
#[derive(Debug, Clone)]
struct OrbitModel {
    m: usize,
    base: i64,
    windows: Vec<Window>,
    pieces: Vec<Piece>,
    /// Start of each piece in unwrapped `t`.
    starts: Vec<f64>,
    /// `∫ dt/q` from the base point to the start of each piece.
    cumulative: Vec<f64>,
    total: f64,
    gl_smooth: GaussLegendre,
    gl_window: GaussLegendre,
}

const STENCIL: [f64; 8] = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0];

impl OrbitModel {
    fn build(q: &[f64], zeros: &[f64]) -> Result<Self> {
        let m = q.len();
        let mi = m as i64;
        let h = 1.0 / m as f64;
        let (base, windows) = if zeros.is_empty() {
            (0_i64, Vec::new())
        } else {
            let nz = zeros.len();
            let gaps: Vec<f64> = (0..nz)
                .map(|i| {
                    let next = if i + 1 < nz { zeros[i + 1] } else { zeros[0] + 1.0 };
                    next - zeros[i]
                })
                .collect();
            let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
            let half = WINDOW.min((min_gap * m as f64 / 2.0).floor() as i64 - 4);
            if half < MIN_WINDOW {
                return Err(Error::NonRegularizable(format!(
                    "collisions {min_gap:.3e} apart are not resolved by {m} samples"
                )));
            }
            // Base point halfway between the last zero and the first one.
            let mid = 0.5 * (zeros[nz - 1] - 1.0 + zeros[0]);
            let base = (mid * m as f64).round() as i64;
            let base_t = base as f64 * h;
            let mut windows = Vec::with_capacity(nz);
            let mut unwrapped: Vec<f64> = zeros
                .iter()
                .map(|&z| if z < base_t { z + 1.0 } else { z })
                .collect();
            unwrapped.sort_by(f64::total_cmp);
            for center in unwrapped {
                windows.push(fit_window(q, center, half)?);
            }
            (base, windows)
        };

        let mut pieces = Vec::new();
        let mut starts = Vec::new();
        let mut j = base;
        let mut wi = 0;
        while j < base + mi {
            if wi < windows.len() && j == windows[wi].lo {
                pieces.push(Piece::Window(wi));
                starts.push(j as f64 * h);
                j = windows[wi].hi;
                wi += 1;
            } else {
                pieces.push(Piece::Smooth(j));
                starts.push(j as f64 * h);
                j += 1;
            }
        }
        let mut model = Self {
            m,
            base,
            windows,
            pieces,
            starts,
            cumulative: Vec::new(),
            total: 0.0,
            gl_smooth: GaussLegendre::new(8),
            gl_window: GaussLegendre::new(24),
        };
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(model.pieces.len());
        for p in &model.pieces {
            cumulative.push(acc);
            acc += match p {
                Piece::Smooth(j) => {
                    let a = *j as f64 * h;
                    model.integrate_smooth(q, *j, a, a + h, |v| 1.0 / v)
                }
                Piece::Window(w) => {
                    let win = &model.windows[*w];
                    model.window_inverse_integral(win, win.s_lo, win.s_hi)
                }
            };
        }
        model.cumulative = cumulative;
        model.total = acc;
        if !(acc.is_finite() && acc > 0.0) {
            return Err(Error::NonRegularizable(format!("∫dt/q evaluates to {acc}")));
        }
        Ok(model)
    }

    fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    fn sample(&self, q: &[f64], j: i64) -> f64 {
        q[j.rem_euclid(self.m as i64) as usize]
    }

    /// Eight-point Lagrange interpolant on `[j h, (j+1) h]`: value and derivative.
    fn interpolate(&self, q: &[f64], j: i64, u: f64) -> (f64, f64) {
        let x = u / self.h() - j as f64;
        let mut v = 0.0;
        let mut d = 0.0;
        for (k, &xk) in STENCIL.iter().enumerate() {
            let mut num = 1.0;
            let mut den = 1.0;
            let mut dnum = 0.0;
            for (l, &xl) in STENCIL.iter().enumerate() {
                if l == k {
                    continue;
                }
                dnum = dnum * (x - xl) + num;
                num *= x - xl;
                den *= xk - xl;
            }
            let qk = self.sample(q, j + xk as i64);
            v += qk * num / den;
            d += qk * dnum / den;
        }
        (v, d / self.h())
    }

    fn integrate_smooth<F: Fn(f64) -> f64>(&self, q: &[f64], j: i64, a: f64, b: f64, f: F) -> f64 {
        self.gl_smooth.integrate(a, b, |u| f(self.interpolate(q, j, u).0))
    }

    /// `∫ 3/G(s) ds` over `[s0, s1]`.
    fn window_inverse_integral(&self, w: &Window, s0: f64, s1: f64) -> f64 {
        self.gl_window
            .integrate(s0, s1, |s| 3.0 / w.g.eval(s).0)
    }

    fn piece_index(&self, u: f64) -> usize {
        match self.starts.binary_search_by(|s| s.total_cmp(&u)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    /// Map `t ∈ ℝ` into the model's period `[b h, b h + 1)`.
    fn unwrap(&self, t: f64) -> f64 {
        let b = self.base as f64 * self.h();
        b + (t - b).rem_euclid(1.0)
    }

    /// `q` at unwrapped `u`.
    fn value(&self, q: &[f64], u: f64) -> f64 {
        match &self.pieces[self.piece_index(u)] {
            Piece::Smooth(j) => self.interpolate(q, *j, u).0,
            Piece::Window(w) => {
                let w = &self.windows[*w];
                let s = w.s_of(u);
                s * s * w.g.eval(s).0
            }
        }
    }

    /// `|z|` with `z² = q`, smooth through collisions.
    fn magnitude(&self, q: &[f64], u: f64) -> f64 {
        match &self.pieces[self.piece_index(u)] {
            Piece::Smooth(j) => self.interpolate(q, *j, u).0.max(0.0).sqrt(),
            Piece::Window(w) => {
                let w = &self.windows[*w];
                let s = w.s_of(u);
                s.abs() * w.g.eval(s).0.max(0.0).sqrt()
            }
        }
    }

    /// `∫_{base}^u dt/q`.
    fn cumulative_at(&self, q: &[f64], u: f64) -> f64 {
        let i = self.piece_index(u);
        self.cumulative[i]
            + match &self.pieces[i] {
                Piece::Smooth(j) => self.integrate_smooth(q, *j, self.starts[i], u, |v| 1.0 / v),
                Piece::Window(w) => {
                    let w = &self.windows[*w];
                    self.window_inverse_integral(w, w.s_lo, w.s_of(u))
                }
            }
    }

    /// Unwrapped `u` with `∫_{base}^u dt/q = c`, `c ∈ [0, total)`.
    fn solve_cumulative(&self, q: &[f64], c: f64) -> f64 {
        let i = match self.cumulative.binary_search_by(|v| v.total_cmp(&c)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let target = c - self.cumulative[i];
        match &self.pieces[i] {
            Piece::Smooth(j) => {
                let a = self.starts[i];
                let (mut lo, mut hi) = (a, a + self.h());
                let mut u = a + target * self.interpolate(q, *j, a).0;
                for _ in 0..100 {
                    if !(u > lo && u < hi) {
                        u = 0.5 * (lo + hi);
                    }
                    let f = self.integrate_smooth(q, *j, a, u, |v| 1.0 / v) - target;
                    if f < 0.0 {
                        lo = u;
                    } else {
                        hi = u;
                    }
                    let step = f * self.interpolate(q, *j, u).0;
                    u -= step;
                    if step.abs() < 1e-16 || hi - lo < 1e-16 {
                        break;
                    }
                }
                u.clamp(a, a + self.h())
            }
            Piece::Window(w) => {
                let w = &self.windows[*w];
                let (mut lo, mut hi) = (w.s_lo, w.s_hi);
                let mut s = 0.5 * (lo + hi);
                for _ in 0..100 {
                    let f = self.window_inverse_integral(w, w.s_lo, s) - target;
                    if f < 0.0 {
                        lo = s;
                    } else {
                        hi = s;
                    }
                    let next = s - f * w.g.eval(s).0 / 3.0;
                    let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
                    if (next - s).abs() < 1e-16 || hi - lo < 1e-16 {
                        s = next;
                        break;
                    }
                    s = next;
                }
                w.center + s * s * s
            }
        }
    }

    /// `∫ φ(q) dt` and `∫ q̇² dt` over one period.
    fn integrals<F: Fn(f64) -> f64>(&self, q: &[f64], phi: F) -> (f64, f64) {
        let mut value = 0.0;
        let mut kinetic = 0.0;
        let h = self.h();
        for p in &self.pieces {
            match p {
                Piece::Smooth(j) => {
                    let a = *j as f64 * h;
                    value += self.integrate_smooth(q, *j, a, a + h, &phi);
                    kinetic += self
                        .gl_smooth
                        .integrate(a, a + h, |u| self.interpolate(q, *j, u).1.powi(2));
                }
                Piece::Window(w) => {
                    let w = &self.windows[*w];
                    for (s0, s1) in [(w.s_lo, 0.0), (0.0, w.s_hi)] {
                        value += self.gl_window.integrate(s0, s1, |s| {
                            phi(s * s * w.g.eval(s).0) * 3.0 * s * s
                        });
                        kinetic += self.gl_window.integrate(s0, s1, |s| {
                            let (g, dg) = w.g.eval(s);
                            (2.0 * g + s * dg).powi(2) / 3.0
                        });
                    }
                }
            }
        }
        (value, kinetic)
    }
}

fn fit_window(q: &[f64], center: f64, half: i64) -> Result<Window> {
    let m = q.len() as i64;
    let h = 1.0 / m as f64;
    let c = (center * m as f64).floor() as i64;
    let (lo, hi) = (c - half + 1, c + half);
    let mut ss = Vec::new();
    let mut gs = Vec::new();
    let mut logs = Vec::new();
    for j in lo..=hi {
        let dt = j as f64 * h - center;
        let qj = q[j.rem_euclid(m) as usize];
        if dt.abs() >= 2.0 * h {
            if !(qj > 0.0) {
                return Err(Error::NonRegularizable(format!(
                    "q vanishes near the collision at t = {center:.6}, not only at it"
                )));
            }
            logs.push((dt.abs().ln(), qj.ln()));
        }
        if dt.abs() > 1e-3 * h {
            let s = dt.cbrt();
            ss.push(s);
            gs.push(qj / (s * s));
        }
    }
    let exponent = slope(&logs);
    if !(exponent < 1.0) {
        return Err(Error::NonRegularizable(format!(
            "q ~ |t − t*|^{exponent:.2} at t* = {center:.6}; ∫dt/q diverges"
        )));
    }
    let degree = FIT_DEGREE.min(ss.len() / 3);
    let g = Chebyshev::fit(&ss, &gs, degree).ok_or_else(|| {
        Error::NonRegularizable(format!("cannot resolve the collision at t = {center:.6}"))
    })?;
    let s_lo = (lo as f64 * h - center).cbrt();
    let s_hi = (hi as f64 * h - center).cbrt();
    let min_g = (0..=64)
        .map(|i| g.eval(s_lo + (s_hi - s_lo) * i as f64 / 64.0).0)
        .fold(f64::INFINITY, f64::min);
    if !(min_g > 0.0) {
        return Err(Error::NonRegularizable(format!(
            "collision at t = {center:.6} is not simple: q/(t − t*)^{{2/3}} reaches {min_g:.3e}"
        )));
    }
    Ok(Window {
        center,
        lo,
        hi,
        s_lo,
        s_hi,
        g,
    })
}

/// Least-squares slope of `y` against `x`.
fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(a, b), p| {
        (a + (p.0 - mx) * (p.1 - my), b + (p.0 - mx).powi(2))
    });
    sxy / sxx
}

/// A collision orbit `q ≥ 0` sampled on `t_j = j/M`, `j = 0..M`, over one period.
#[derive(Debug, Clone)]
pub struct Orbit {
    q: Vec<f64>,
    zeros: Vec<f64>,
    mean: f64,
    model: OrbitModel,
}

impl Orbit {
    /// An orbit from samples and the exact collision times in `[0, 1)`.
    pub fn new(mut q: Vec<f64>, mut zeros: Vec<f64>) -> Result<Self> {
        let m = q.len();
        if m < 256 || m % 4 != 0 {
            return Err(Error::Config(format!(
                "an orbit needs a multiple of 4 and at least 256 samples, got {m}"
            )));
        }
        let scale = q.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if !(scale > 0.0) || q.iter().any(|v| !v.is_finite()) {
            return Err(Error::AllCollision);
        }
        if let Some(bad) = q.iter().find(|v| **v < -1e-12 * scale) {
            return Err(Error::Domain(format!("q must be nonnegative, found {bad:.3e}")));
        }
        for v in &mut q {
            *v = v.max(0.0);
        }
        if zeros.iter().any(|z| !(0.0..1.0).contains(z)) {
            return Err(Error::Domain("collision times must lie in [0, 1)".into()));
        }
        zeros.sort_by(f64::total_cmp);
        zeros.dedup();
        if zeros.is_empty() && q.iter().any(|v| *v <= 1e-12 * scale) {
            return Err(Error::NonRegularizable(
                "q vanishes at a sample but no collision time was given".into(),
            ));
        }
        let model = OrbitModel::build(&q, &zeros)?;
        let (mean, _) = model.integrals(&q, |v| v);
        Ok(Self {
            q,
            zeros,
            mean,
            model,
        })
    }

    /// An orbit from samples alone; collisions are located at grid minima where `q`
    /// drops below `1e-9 · max q`.
    pub fn from_samples(q: Vec<f64>) -> Result<Self> {
        let m = q.len();
        let scale = q.iter().fold(0.0_f64, |a, v| a.max(*v));
        let zeros: Vec<f64> = (0..m)
            .filter(|&j| {
                let (prev, next) = (q[(j + m - 1) % m], q[(j + 1) % m]);
                q[j] <= 1e-9 * scale && q[j] <= prev && q[j] < next
            })
            .map(|j| j as f64 / m as f64)
            .collect();
        Self::new(q, zeros)
    }

    pub fn samples(&self) -> &[f64] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn zeros(&self) -> &[f64] {
        &self.zeros
    }

    /// `q̄ = ∫₀¹ q dt`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 / self.q.len() as f64
    }

    /// `q(t)` between samples, exact in the collision variable near zeros.
    pub fn eval(&self, t: f64) -> f64 {
        self.model.value(&self.q, self.model.unwrap(t))
    }

    /// `∫₀¹ dt/q`, regularized at the collisions.
    pub fn inverse_integral(&self) -> f64 {
        self.model.total
    }

    /// `‖q̇‖² = ∫₀¹ q̇² dt`.
    pub fn kinetic(&self) -> f64 {
        self.model.integrals(&self.q, |v| v).1
    }

    /// Whether sample `j` is the grid point nearest to a collision.
    pub fn is_collision_sample(&self, j: usize) -> bool {
        let m = self.q.len() as f64;
        self.zeros.iter().any(|z| {
            let d = (j as f64 - z * m).rem_euclid(m);
            d.min(m - d) <= 0.5
        })
    }

    /// Eighth-order central difference of `q` at every sample.
    pub fn derivative_fd(&self) -> Vec<f64> {
        const C: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
        self.stencil(|q, j| {
            C.iter()
                .enumerate()
                .map(|(k, c)| c * (q(j + k as i64 + 1) - q(j - k as i64 - 1)))
                .sum()
        }, 1)
    }

    /// Eighth-order central second difference of `q` at every sample.
    pub fn second_derivative_fd(&self) -> Vec<f64> {
        const C0: f64 = -205.0 / 72.0;
        const C: [f64; 4] = [8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
        self.stencil(|q, j| {
            C0 * q(j)
                + C.iter()
                    .enumerate()
                    .map(|(k, c)| c * (q(j + k as i64 + 1) + q(j - k as i64 - 1)))
                    .sum::<f64>()
        }, 2)
    }

    fn stencil<F: Fn(&dyn Fn(i64) -> f64, i64) -> f64>(&self, f: F, order: i32) -> Vec<f64> {
        let m = self.q.len() as i64;
        let at = |j: i64| self.q[j.rem_euclid(m) as usize];
        let scale = (m as f64).powi(order);
        (0..m).map(|j| f(&at, j) * scale).collect()
    }

    /// Indices where `q ≥ SAFE_FRACTION · max q`.
    pub fn safe_region(&self) -> Vec<usize> {
        let max = self.q.iter().copied().fold(0.0, f64::max);
        (0..self.q.len())
            .filter(|&j| self.q[j] >= SAFE_FRACTION * max)
            .collect()
    }
}

fn require_symmetric(z: &Loop) -> Result<()> {
    if z.class() == SymmetryClass::Full {
        return Err(Error::ClassMismatch(
            "the orbit of a loop needs z² to have period 1 (odd-sine or even-cosine class)".into(),
        ));
    }
    Ok(())
}

/// Collision orbit and the `τ` of every sample.
fn forward_parts(z: &Loop, m: usize) -> Result<(Orbit, Vec<f64>, LoopTime)> {
    require_symmetric(z)?;
    let lt = LoopTime::new(z)?;
    let zeros_tau = lt.zeros();
    let map = tabulate(&lt, &zeros_tau)?;
    let zeros_t: Vec<f64> = zeros_tau
        .iter()
        .map(|&tau| lt.t(tau))
        .map(|t| if t >= 1.0 { t - 1.0 } else { t.max(0.0) })
        .collect();
    let taus = solve_times(&lt, &map, m);
    let mut q: Vec<f64> = taus.iter().map(|&tau| lt.z.value(tau).powi(2)).collect();
    for &t in &zeros_t {
        let j = (t * m as f64).round() as usize % m;
        if (j as f64 / m as f64 - t).abs() < 1e-15 {
            q[j] = 0.0;
        }
    }
    Ok((Orbit::new(q, zeros_t)?, taus, lt))
}

/// `q(t) = z(τ_z(t))²` on `ORBIT_SAMPLES` points.
pub fn forward(z: &Loop) -> Result<Orbit> {
    forward_with(z, ORBIT_SAMPLES)
}

pub fn forward_with(z: &Loop, samples: usize) -> Result<Orbit> {
    Ok(forward_parts(z, samples)?.0)
}

/// Whether `z` is periodic or antiperiodic with period 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parity {
    /// `z(τ + 1) = z(τ)`; an even number of collisions per period.
    Even,
    /// `z(τ + 1) = −z(τ)`; an odd number of collisions per period.
    Odd,
}

/// The loop `z` with `z(τ)² = q(t_q(τ))`, normalized by `z > 0` right after `τ = 0`.
///
/// The result is odd-sine (odd parity) or even-cosine (even parity) when `q` has the
/// matching reflection symmetry, and a full period-2 loop otherwise. `modes` is the
/// number of coefficients in the symmetric class; a full loop keeps harmonics up to
/// the same frequency.
pub fn inverse(orbit: &Orbit, parity: Parity, modes: usize) -> Result<Loop> {
    let count = orbit.zeros.len();
    let expected = match parity {
        Parity::Even => count % 2 == 0,
        Parity::Odd => count % 2 == 1,
    };
    if !expected {
        return Err(Error::Precondition(format!(
            "{count} collisions per period do not match {parity:?} parity"
        )));
    }
    if modes == 0 {
        return Err(Error::Config("need at least one mode".into()));
    }
    let model = &orbit.model;
    let total = model.total;
    let start = model.cumulative_at(&orbit.q, model.unwrap(0.0));
    let m_tau = (16 * modes).max(2048).next_power_of_two();
    let half = m_tau / 2;
    let mut samples = vec![0.0; m_tau];
    for i in 0..half {
        let tau = 2.0 * i as f64 / m_tau as f64;
        let c = (start + tau * total).rem_euclid(total);
        let u = model.solve_cumulative(&orbit.q, c);
        let t = u.rem_euclid(1.0);
        let flips = orbit.zeros.iter().filter(|&&z| z > 0.0 && z < t).count();
        let sign = if flips % 2 == 0 { 1.0 } else { -1.0 };
        samples[i] = sign * model.magnitude(&orbit.q, u);
    }
    let shift = if parity == Parity::Odd { -1.0 } else { 1.0 };
    for i in 0..half {
        samples[i + half] = shift * samples[i];
    }
    let class = match parity {
        Parity::Odd => SymmetryClass::OddSine,
        Parity::Even => SymmetryClass::EvenCosine,
    };
    let scale = samples.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let (class, n) = match Loop::analyze_with_tolerance(&samples, class, 1e-7 * scale) {
        Ok(_) => (class, modes),
        Err(Error::ClassMismatch(_)) => {
            let k_max = class.max_harmonic(modes);
            (SymmetryClass::Full, 2 * k_max + 1)
        }
        Err(e) => return Err(e),
    };
    Loop::new(class, project(&samples, class, n))
}

/// Residuals of `q̈ = −2/q² − r/q̄²` on the safe region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QResidual {
    /// `sup |q̈ + 2/q² + r/q̄²|`.
    pub ode_res: f64,
    /// `sup |q²(q̈ + r/q̄²) + 2|`, i.e. `|βq³ + μ|` with `μ = 2`.
    pub beta_mu_res: f64,
    pub safe_points: usize,
}

pub fn q_residual(orbit: &Orbit, r: f64) -> Result<QResidual> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("r must be nonnegative, got {r}")));
    }
    let safe = orbit.safe_region();
    if safe.is_empty() {
        return Err(Error::AllCollision);
    }
    let qdd = orbit.second_derivative_fd();
    let qbar2 = orbit.mean().powi(2);
    let mut ode_res: f64 = 0.0;
    let mut beta_mu_res: f64 = 0.0;
    for &j in &safe {
        let q = orbit.q[j];
        let accel = qdd[j] + r / qbar2;
        ode_res = ode_res.max((accel + 2.0 / (q * q)).abs());
        beta_mu_res = beta_mu_res.max((q * q * accel + 2.0).abs());
    }
    Ok(QResidual {
        ode_res,
        beta_mu_res,
        safe_points: safe.len(),
    })
}

/// Relative residuals of the mean-value identities of the transformation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanIdentities {
    /// `q̄` against `‖z²‖²/‖z‖²`.
    pub mean: f64,
    /// `∫dt/q` against `1/‖z‖²`.
    pub inverse: f64,
    /// `‖q̇‖²` against `4‖z‖²‖z'‖²`.
    pub kinetic: f64,
}

impl MeanIdentities {
    pub fn max(&self) -> f64 {
        self.mean.max(self.inverse).max(self.kinetic)
    }
}

pub fn mean_identities(z: &Loop, orbit: &Orbit) -> MeanIdentities {
    let (n, d, s) = (z.l2_sq(), z.deriv_sq(), z.square_sq());
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    MeanIdentities {
        mean: rel(orbit.mean(), s / n),
        inverse: rel(orbit.inverse_integral(), 1.0 / n),
        kinetic: rel(orbit.kinetic(), 4.0 * n * d),
    }
}

/// `sup |q̈_FD − (2‖z‖⁴ z''/z − q̇²/2)/q|` over the safe region, with `q̇ = 2‖z‖² z'/z`.
pub fn chain_rule_residual(z: &Loop) -> Result<f64> {
    let (orbit, taus, lt) = forward_parts(z, ORBIT_SAMPLES)?;
    let qdd = orbit.second_derivative_fd();
    let n = lt.norm_sq;
    let mut worst: f64 = 0.0;
    for j in orbit.safe_region() {
        let (zv, zd, zdd) = lt.z.eval(taus[j]);
        let q = orbit.q[j];
        let qdot = 2.0 * n * zd / zv;
        let formula = (2.0 * n * n * zdd / zv - 0.5 * qdot * qdot) / q;
        worst = worst.max((qdd[j] - formula).abs());
    }
    Ok(worst)
}

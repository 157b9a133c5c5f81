//! Second-order jets over a handful of scalar variables.
//!
//! The functionals here are rational expressions in a few loop norms
//! (`‖z‖²`, `‖z'‖²`, `‖z²‖²`, ...). A jet carries a value with its exact gradient and
//! Hessian in those scalars, so the coefficient-space derivatives follow from one
//! chain rule.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Jet<const K: usize> {
    pub v: f64,
    pub g: [f64; K],
    pub h: [[f64; K]; K],
}

impl<const K: usize> Jet<K> {
    pub fn constant(v: f64) -> Self {
        Self {
            v,
            g: [0.0; K],
            h: [[0.0; K]; K],
        }
    }

    /// The `i`-th independent variable with value `v`.
    pub fn variable(i: usize, v: f64) -> Self {
        let mut j = Self::constant(v);
        j.g[i] = 1.0;
        j
    }

    pub fn recip(self) -> Self {
        let inv = 1.0 / self.v;
        let inv2 = inv * inv;
        let mut out = Self::constant(inv);
        for a in 0..K {
            out.g[a] = -self.g[a] * inv2;
            for b in 0..K {
                out.h[a][b] = -self.h[a][b] * inv2 + 2.0 * self.g[a] * self.g[b] * inv2 * inv;
            }
        }
        out
    }

    #[cfg(test)]
    pub fn powi(self, n: i32) -> Self {
        let base = self.v;
        let d1 = n as f64 * base.powi(n - 1);
        let d2 = (n * (n - 1)) as f64 * base.powi(n - 2);
        let mut out = Self::constant(base.powi(n));
        for a in 0..K {
            out.g[a] = d1 * self.g[a];
            for b in 0..K {
                out.h[a][b] = d1 * self.h[a][b] + d2 * self.g[a] * self.g[b];
            }
        }
        out
    }
}

impl<const K: usize> Add for Jet<K> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for a in 0..K {
            self.g[a] += o.g[a];
            for b in 0..K {
                self.h[a][b] += o.h[a][b];
            }
        }
        self
    }
}

impl<const K: usize> Neg for Jet<K> {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl<const K: usize> Sub for Jet<K> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<const K: usize> Mul for Jet<K> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::constant(self.v * o.v);
        for a in 0..K {
            out.g[a] = self.v * o.g[a] + o.v * self.g[a];
            for b in 0..K {
                out.h[a][b] = self.v * o.h[a][b]
                    + o.v * self.h[a][b]
                    + self.g[a] * o.g[b]
                    + o.g[a] * self.g[b];
            }
        }
        out
    }
}

impl<const K: usize> Mul<f64> for Jet<K> {
    type Output = Self;
    fn mul(mut self, s: f64) -> Self {
        self.v *= s;
        for a in 0..K {
            self.g[a] *= s;
            for b in 0..K {
                self.h[a][b] *= s;
            }
        }
        self
    }
}

impl<const K: usize> Mul<Jet<K>> for f64 {
    type Output = Jet<K>;
    fn mul(self, j: Jet<K>) -> Jet<K> {
        j * self
    }
}

impl<const K: usize> Div for Jet<K> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<const K: usize> Add<f64> for Jet<K> {
    type Output = Self;
    fn add(mut self, s: f64) -> Self {
        self.v += s;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_expression_matches_hand_derivatives() {
        // f(x, y) = x² y + 1/y at (2, 3)
        let x = Jet::<2>::variable(0, 2.0);
        let y = Jet::<2>::variable(1, 3.0);
        let f = x.powi(2) * y + y.recip();
        assert!((f.v - (12.0 + 1.0 / 3.0)).abs() < 1e-14);
        assert!((f.g[0] - 12.0).abs() < 1e-14);
        assert!((f.g[1] - (4.0 - 1.0 / 9.0)).abs() < 1e-14);
        assert!((f.h[0][0] - 6.0).abs() < 1e-14);
        assert!((f.h[0][1] - 4.0).abs() < 1e-14);
        assert!((f.h[1][1] - 2.0 / 27.0).abs() < 1e-14);
        let q = x / y;
        assert!((q.h[1][1] - 2.0 * 2.0 / 27.0).abs() < 1e-14);
    }
}

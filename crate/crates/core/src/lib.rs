//! Regularized frozen-planet orbits of helium.
//!
//! The inner electron's collisions with the nucleus are regularized by the
//! Levi-Civita substitution `q = z²`, which turns periodic collision orbits into
//! smooth loops `z`. Frozen-planet orbits are then critical points of explicit
//! functionals on loop spaces: the one-loop family `F_r` and the two-loop
//! functionals `B_av` (mean interaction) and `B_in` (instantaneous interaction).
//!
//! The crate computes these critical points by Newton's method and parameter
//! continuation, certifies them with residual and spectral diagnostics, checks the
//! algebraic identities that connect the functionals, and provides a
//! finite-dimensional model of the determinant-line orientation argument.

pub mod detline;
pub mod elliptic;
pub mod error;
pub mod frozen;
pub mod helium;
pub mod io;
pub mod levi_civita;
pub mod loops;
pub mod quadrature;
pub mod solve;

mod calculus;
mod jet;

pub use error::{Error, Result};
pub use loops::{Loop, Norms, SymmetryClass};

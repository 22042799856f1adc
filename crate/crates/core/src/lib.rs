// negated comparisons reject NaN; tabulated constants keep their published digits
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

//! Radial reduction of the transport equation `u_t + v·∇u = 0` with the
//! nonlocal velocity `v = Λ^{-2+α} ∇u`.
//!
//! The crate is organised bottom-up:
//!
//! - [`special`]: Gamma, Beta, double factorial and sphere areas.
//! - [`quadrature`]: adaptive Gauss–Kronrod and fixed Gauss–Legendre rules.
//! - [`interp`] and [`grid`]: radial grids, sampled fields and their
//!   piecewise-cubic interpolants.
//! - [`kernel`]: the radial kernel `g_{d,α}` (Taylor series, reflection,
//!   direct angular quadrature, fast tabulated evaluation).
//! - [`mellin`]: the Mellin symbols `H₁`, `H` and the positivity certificate.
//! - [`operator`]: the velocity operator and the weighted functionals.
//! - [`solver`]: semi-Lagrangian time stepping, blowup diagnostics and the
//!   Burgers (`α = 2`) characteristics oracle.

pub mod error;
pub mod grid;
pub mod interp;
pub mod kernel;
pub mod mellin;
pub mod operator;
pub mod quadrature;
pub mod solver;
pub mod special;

pub use error::{Error, Result};
pub use grid::{RadialField, RadialGrid};
pub use kernel::{Kernel, KernelSpec, SeriesCoefficients};
pub use mellin::MellinSymbol;
pub use operator::{VelocityField, VelocityOperator};
pub use solver::{BlowupTrace, SolverConfig, Verdict};

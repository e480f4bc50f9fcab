//! Steady point-vortex equilibria, their desingularization into hollow vortices,
//! and continuation of hollow-vortex branches in the core radius.
//!
//! Module map:
//! - [`pointvortex`]: the algebraic steady problem, classification and dynamics.
//! - [`spectral`]: Fourier densities, the Cauchy operator and layer potentials.
//! - [`hollowvortex`]: physical fields, the nonlinear residual and identity maps.
//! - [`desingularize`]: leading-order guesses, reduced Newton solves, continuation.
//! - [`diagnostics`]: blowup monitors, geometry, conserved quantities.
//! - [`cli_io`]: run configuration, branch files and exports.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli_io;
pub mod desingularize;
pub mod diagnostics;
pub mod error;
pub mod hollowvortex;
pub mod parallel;
pub mod pointvortex;
pub mod spectral;

pub use error::{Result, VortexError};
pub use num_complex::Complex64 as C64;

/// Value written in place of infinite or undefined monitors.
pub const SENTINEL: f64 = 1e300;

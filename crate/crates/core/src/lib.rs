//! Ricci flow on flat tori and axisymmetric spheres, coupled with the
//! log-heat, soliton-heat and conjugate heat equations, plus numerical checks
//! of the associated differential Harnack estimates.
//!
//! * [`geometry`]: backends, grids, differential operators, curvature.
//! * [`flow`]: coupled RK4 time stepping, conjugate sweeps, manufactured solutions.
//! * [`harnack`]: Harnack quantities, evolution-identity residuals, theorem reports.
//! * [`pathopt`]: space-time action, lattice dynamic programming, integrated Harnack.
//! * [`cli`]: scenario runs, verification and convergence sweeps with on-disk reports.

// `!(x > 0.0)` is used on purpose so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod export;
pub mod flow;
pub mod geometry;
pub mod harnack;
pub mod pathopt;

pub use error::{Error, Result};

/// Default verification tolerance `max(1e-6, 5 h²)`.
pub fn default_tolerance(spacing: f64) -> f64 {
    (5.0 * spacing * spacing).max(1e-6)
}

//! Natural-gradient descent for small dense parameter spaces.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: symmetric eigendecomposition, matrix square roots, SPD solves.
//! - [`models`]: the model/objective contracts and the example models.
//! - [`metrics`]: metric providers G(θ) (analytic, Monte-Carlo and empirical
//!   Fisher, energy-based, diagonal) and the WᵀW matrix update.
//! - [`regularize`]: applying G⁻¹ exactly, with a ridge shift, or through the
//!   robust inverse (GᵀG + εI)⁻¹Gᵀ.
//! - [`optimize`]: steepest, natural and whitened-space descent loops.
//! - [`experiments`]: reproducible runs on the 2D Gaussian example and a
//!   whitening demonstration, with CSV/JSON output.
//! - [`cli`]: the `natgrad` command-line front end.

// `!(x > 0.0)` rejects NaN along with non-positive values; index loops keep the
// triangular solves readable.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod optimize;
pub mod regularize;

pub use error::{Error, Result};
pub use linalg::{Matrix, SymMatrix};
pub use metrics::{Metric, MetricProvider};
pub use models::{DataSet, Objective, ParamVector, ProbModel};
pub use optimize::{DescentTrace, OptimizerConfig};

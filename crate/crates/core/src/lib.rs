//! Green's-function kernel regression under a loss-tolerance constraint, and
//! exact simulation of repeated self-distillation in that setting.
//!
//! Modules, bottom up:
//!
//! * [`spectral`]: Jacobi eigendecomposition `G = Vᵀ D V`, rotations, shifted solves.
//! * [`kernels`]: Green's functions, datasets and the `1/K`-scaled Gram matrix.
//! * [`regression`]: multiplier bracketing and bisection, fitted models.
//! * [`distillation`]: the refit-on-own-predictions chain and its traces.
//! * [`analysis`]: closed-form bounds and diagnostics, compared with traces.
//! * [`experiment`]: configuration, dataset sources and file outputs for the CLI.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod distillation;
pub mod error;
pub mod experiment;
pub mod io;
pub mod kernels;
pub mod regression;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use kernels::{Dataset, KernelSpec};
pub use regression::{FitConfig, RegressionModel};
pub use spectral::{GramSpectrum, SymMatrix};

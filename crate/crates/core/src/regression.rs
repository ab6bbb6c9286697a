//! One round of ε-constrained regression.
//!
//! For a loss tolerance ε the fitted function is `f(x) = g_xᵀ (cI + G)⁻¹ y`
//! where the multiplier `c` is the unique positive root of
//!
//! ```text
//! h(c) = (1/K) Σ_k (z_k c / (c + d_k))² − ε,   z = V y.
//! ```
//!
//! `h` is continuous and strictly increasing, so the root is found by
//! bisection inside the closed-form bracket
//! `[d_min √(Kε) / (‖z‖ − √(Kε)),  d_max √(Kε) / (‖z‖ − √(Kε))]`.
//!
//! When `‖y‖² ≤ Kε` the zero function already meets the tolerance and every
//! entry point reports [`Error::CollapseCondition`].
//!
//! Gram matrices with exact null directions are supported: the components
//! of `z` along null directions can never be fitted and contribute a fixed
//! floor `‖z_N‖² / K` to the error, so the bracket is computed for the
//! fittable part with tolerance `ε − ‖z_N‖² / K`. Without null directions
//! this is exactly the bracket above.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    gram_from_points, kernel_vector_from_points, validate_points, Dataset, KernelSpec,
};
use crate::spectral::{dot, eigendecompose_semidefinite, GramSpectrum};

/// Relative slack toward collapse in the `‖y‖² ≤ Kε` test.
pub const COLLAPSE_SLACK: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epsilon: f64,
    pub c_tolerance: f64,
    pub max_bisection_iters: usize,
}

impl FitConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        let config = FitConfig {
            epsilon,
            c_tolerance: 1e-12,
            max_bisection_iters: 200,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be strictly positive, got {}",
                self.epsilon
            )));
        }
        if !(self.c_tolerance > 0.0) {
            return Err(Error::InvalidInput("c_tolerance must be positive".into()));
        }
        if self.max_bisection_iters == 0 {
            return Err(Error::InvalidInput(
                "max_bisection_iters must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Accepted deviation of the achieved training error from ε.
    pub fn error_tolerance(&self) -> f64 {
        (self.c_tolerance * self.epsilon).max(1e-10)
    }
}

/// True when `‖v‖² ≤ Kε` (ties, up to [`COLLAPSE_SLACK`], count as collapsed).
pub fn is_collapsed(norm_sq: f64, k: usize, epsilon: f64) -> bool {
    norm_sq <= k as f64 * epsilon * (1.0 + COLLAPSE_SLACK)
}

fn check_collapse(norm_sq: f64, k: usize, epsilon: f64) -> Result<()> {
    if is_collapsed(norm_sq, k, epsilon) {
        return Err(Error::CollapseCondition {
            norm_sq,
            threshold: k as f64 * epsilon,
        });
    }
    Ok(())
}

/// Training mean squared error at multiplier `c`, in spectral form
/// `(1/K) Σ (z_k c / (c + d_k))²`.
pub fn training_error(spectrum: &GramSpectrum, z: &[f64], c: f64) -> Result<f64> {
    let k = spectrum.dim();
    if z.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: z.len(),
        });
    }
    let sum: f64 = z
        .iter()
        .zip(spectrum.eigvals())
        .map(|(zk, d)| {
            let r = zk * c / (c + d);
            r * r
        })
        .sum();
    Ok(sum / k as f64)
}

/// Bracket `(c_lo, c_hi)` containing the root of `h`.
pub fn multiplier_bounds(spectrum: &GramSpectrum, z: &[f64], epsilon: f64) -> Result<(f64, f64)> {
    let k = spectrum.dim();
    if z.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: z.len(),
        });
    }
    let norm_sq: f64 = z.iter().map(|v| v * v).sum();
    check_collapse(norm_sq, k, epsilon)?;

    let null_sq: f64 = z[..spectrum.null_dim()].iter().map(|v| v * v).sum();
    let k_eps = k as f64 * epsilon - null_sq;
    if k_eps <= 0.0 {
        return Err(Error::Infeasible {
            floor: null_sq / k as f64,
            epsilon,
        });
    }
    let s = k_eps.sqrt();
    let fit_norm = (norm_sq - null_sq).sqrt();
    let gap = fit_norm - s;
    if gap <= 0.0 {
        return Err(Error::CollapseCondition {
            norm_sq,
            threshold: k as f64 * epsilon,
        });
    }
    Ok((spectrum.d_min() * s / gap, spectrum.d_max() * s / gap))
}

/// Unique positive root of `h`, by bisection on the closed-form bracket.
pub fn solve_multiplier(spectrum: &GramSpectrum, z: &[f64], config: &FitConfig) -> Result<f64> {
    config.validate()?;
    let eps = config.epsilon;
    let (c_lo, c_hi) = multiplier_bounds(spectrum, z, eps)?;
    let h = |c: f64| training_error(spectrum, z, c).map(|e| e - eps);

    let (mut lo, mut hi) = (c_lo, c_hi);
    // roundoff can put the analytic bracket a hair off; widen geometrically
    let mut widen = 0;
    while h(lo)? > 0.0 {
        lo *= 0.5;
        widen += 1;
        if widen > config.max_bisection_iters {
            return Err(Error::ConvergenceFailure { iters: widen });
        }
    }
    while h(hi)? < 0.0 {
        hi *= 2.0;
        widen += 1;
        if widen > config.max_bisection_iters {
            return Err(Error::ConvergenceFailure { iters: widen });
        }
    }

    for _ in 0..config.max_bisection_iters {
        let mid = 0.5 * (lo + hi);
        let hm = h(mid)?;
        if hm.abs() <= 1e-14 * eps || hm == 0.0 {
            return Ok(mid);
        }
        if hm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let mid = 0.5 * (lo + hi);
        if hi - lo <= config.c_tolerance * mid || mid <= lo || mid >= hi {
            return Ok(mid);
        }
    }
    Err(Error::ConvergenceFailure {
        iters: config.max_bisection_iters,
    })
}

/// A fitted function `f(x) = g_xᵀ α` with `α = (cI + G)⁻¹ y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub c: f64,
    pub dual_coeffs: Vec<f64>,
    pub kernel: KernelSpec,
    pub data_points: Vec<Vec<f64>>,
    pub achieved_error: f64,
}

impl RegressionModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let gx = kernel_vector_from_points(&self.kernel, &self.data_points, x)?;
        Ok(dot(&gx, &self.dual_coeffs))
    }

    /// Multiplier reciprocal `λ = 1/c`.
    pub fn lambda(&self) -> f64 {
        1.0 / self.c
    }
}

/// `g_xᵀ · dual_coeffs`.
pub fn predict(model: &RegressionModel, x: &[f64]) -> Result<f64> {
    model.predict(x)
}

/// Fits one model: builds `G`, decomposes it once, solves for `c`.
pub fn fit(data: &Dataset, kernel: &KernelSpec, config: &FitConfig) -> Result<RegressionModel> {
    kernel.validate()?;
    let gram = gram_from_points(kernel, data.points())?;
    let spectrum = eigendecompose_semidefinite(&gram)?;
    fit_with_spectrum(&spectrum, kernel, data.points(), data.labels(), config)
}

/// Fit reusing an existing decomposition of the Gram matrix of `points`.
pub fn fit_with_spectrum(
    spectrum: &GramSpectrum,
    kernel: &KernelSpec,
    points: &[Vec<f64>],
    labels: &[f64],
    config: &FitConfig,
) -> Result<RegressionModel> {
    if points.len() != spectrum.dim() {
        return Err(Error::DimensionMismatch {
            expected: spectrum.dim(),
            got: points.len(),
        });
    }
    let z = spectrum.rotate(labels)?;
    let c = solve_multiplier(spectrum, &z, config)?;
    let scaled: Vec<f64> = z
        .iter()
        .zip(spectrum.eigvals())
        .map(|(zk, d)| zk / (c + d))
        .collect();
    Ok(RegressionModel {
        c,
        dual_coeffs: spectrum.unrotate(&scaled)?,
        kernel: *kernel,
        data_points: points.to_vec(),
        achieved_error: training_error(spectrum, &z, c)?,
    })
}

/// Training-point predictions `Vᵀ D (cI + D)⁻¹ V y`.
pub fn training_predictions(spectrum: &GramSpectrum, labels: &[f64], c: f64) -> Result<Vec<f64>> {
    let z = spectrum.rotate(labels)?;
    let shrunk: Vec<f64> = z
        .iter()
        .zip(spectrum.eigvals())
        .map(|(zk, d)| zk * d / (c + d))
        .collect();
    spectrum.unrotate(&shrunk)
}

/// Independent per-output fits over shared inputs, one multiplier each.
///
/// Each entry carries its own result so that a collapsed output does not
/// hide the others.
pub fn fit_multiclass(
    points: &[Vec<f64>],
    label_sets: &[Vec<f64>],
    kernel: &KernelSpec,
    config: &FitConfig,
) -> Result<Vec<Result<RegressionModel>>> {
    kernel.validate()?;
    validate_points(points)?;
    let gram = gram_from_points(kernel, points)?;
    let spectrum = eigendecompose_semidefinite(&gram)?;
    Ok(label_sets
        .iter()
        .map(|labels| {
            if labels.len() != points.len() {
                return Err(Error::DimensionMismatch {
                    expected: points.len(),
                    got: labels.len(),
                });
            }
            fit_with_spectrum(&spectrum, kernel, points, labels, config)
        })
        .collect())
}

//! The self-distillation chain.
//!
//! Round `t` fits the targets `y_t` under the same tolerance ε and the next
//! round's targets are this round's training predictions. Because the Gram
//! matrix never changes, one eigendecomposition serves every round and the
//! chain reduces to a diagonal recurrence on rotated labels:
//!
//! ```text
//! z_{t+1} = A_t z_t,   A_t = D (c_t I + D)⁻¹,   B_t = A_0 A_1 ⋯ A_t
//! f_t(x)  = g_xᵀ (c_t I + G)⁻¹ y_t = p_xᵀ B_t z_0,   p_x = D⁻¹ V g_x
//! ```
//!
//! The chain stops when `‖y_t‖² ≤ Kε`, where the zero function already meets
//! the tolerance and every later round reproduces it.
//!
//! Along exact null directions of `G` the diagonal entries of `A_t` are zero:
//! those label components are dropped after the first round.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{gram_from_points, kernel_vector_from_points, Dataset, KernelSpec};
use crate::regression::{
    is_collapsed, solve_multiplier, training_error, FitConfig, RegressionModel,
};
use crate::spectral::{eigendecompose_semidefinite, norm, GramSpectrum};

/// Default cap on the number of recorded rounds.
pub const DEFAULT_MAX_ROUNDS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillationState {
    pub t: usize,
    /// Targets of this round.
    pub y: Vec<f64>,
    /// Rotated targets `V y`.
    pub z: Vec<f64>,
    pub c: f64,
    /// `d_k / (c + d_k)` in eigenvalue order.
    pub a_diag: Vec<f64>,
    /// Running product of `a_diag` over rounds `0..=t`.
    pub b_diag: Vec<f64>,
    pub norm_z: f64,
    /// Training error against this round's targets; equals ε up to the solver tolerance.
    pub train_error: f64,
    /// Training error of this round's model against the original labels.
    pub train_error_vs_y0: f64,
}

/// Result of one distillation step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Next(DistillationState),
    /// The new targets satisfy `‖y‖² ≤ Kε`; the solution is the zero function.
    Collapsed {
        t: usize,
        norm_z: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillationTrace {
    pub kernel: KernelSpec,
    pub points: Vec<Vec<f64>>,
    pub y0: Vec<f64>,
    pub epsilon: f64,
    pub config: FitConfig,
    pub spectrum: GramSpectrum,
    pub states: Vec<DistillationState>,
    /// First round whose targets are collapsed, if reached.
    pub collapsed_at: Option<usize>,
    /// `‖z‖` of the collapsed targets.
    pub collapse_norm_z: Option<f64>,
}

fn state_for(
    spectrum: &GramSpectrum,
    t: usize,
    y: Vec<f64>,
    z: Vec<f64>,
    prev_b: Option<&[f64]>,
    z0: &[f64],
    config: &FitConfig,
) -> Result<DistillationState> {
    let c = solve_multiplier(spectrum, &z, config)?;
    let a_diag: Vec<f64> = spectrum.eigvals().iter().map(|d| d / (c + d)).collect();
    let b_diag: Vec<f64> = match prev_b {
        Some(b) => b.iter().zip(&a_diag).map(|(b, a)| b * a).collect(),
        None => a_diag.clone(),
    };
    let k = spectrum.dim() as f64;
    // the model's predictions are Vᵀ B_t z_0, so its residual against y_0
    // in rotated coordinates is (1 − B_t) z_0
    let train_error_vs_y0 = z0
        .iter()
        .zip(&b_diag)
        .map(|(z, b)| {
            let r = (1.0 - b) * z;
            r * r
        })
        .sum::<f64>()
        / k;
    Ok(DistillationState {
        t,
        norm_z: norm(&z),
        train_error: training_error(spectrum, &z, c)?,
        train_error_vs_y0,
        y,
        z,
        c,
        a_diag,
        b_diag,
    })
}

/// Round 0: fit the original labels.
pub fn initial_state(
    spectrum: &GramSpectrum,
    y0: &[f64],
    config: &FitConfig,
) -> Result<DistillationState> {
    let z0 = spectrum.rotate(y0)?;
    state_for(spectrum, 0, y0.to_vec(), z0.clone(), None, &z0, config)
}

/// Advances the chain by one round: `z_{t+1} = A_t z_t`, then solves for `c_{t+1}`.
pub fn distill_step(
    spectrum: &GramSpectrum,
    prev: &DistillationState,
    z0: &[f64],
    config: &FitConfig,
) -> Result<StepOutcome> {
    let z: Vec<f64> = prev
        .z
        .iter()
        .zip(&prev.a_diag)
        .map(|(z, a)| a * z)
        .collect();
    let t = prev.t + 1;
    let norm_z = norm(&z);
    if is_collapsed(norm_z * norm_z, spectrum.dim(), config.epsilon) {
        return Ok(StepOutcome::Collapsed { t, norm_z });
    }
    let y = spectrum.unrotate(&z)?;
    state_for(spectrum, t, y, z, Some(&prev.b_diag), z0, config).map(StepOutcome::Next)
}

/// Runs the chain from the dataset's labels until collapse or `max_rounds`
/// recorded rounds.
pub fn run_chain(
    data: &Dataset,
    kernel: &KernelSpec,
    config: &FitConfig,
    max_rounds: usize,
) -> Result<DistillationTrace> {
    kernel.validate()?;
    let gram = gram_from_points(kernel, data.points())?;
    let spectrum = eigendecompose_semidefinite(&gram)?;
    run_chain_with_spectrum(
        spectrum,
        kernel,
        data.points(),
        data.labels(),
        config,
        max_rounds,
    )
}

/// [`run_chain`] with a precomputed decomposition of the Gram matrix of `points`.
pub fn run_chain_with_spectrum(
    spectrum: GramSpectrum,
    kernel: &KernelSpec,
    points: &[Vec<f64>],
    y0: &[f64],
    config: &FitConfig,
    max_rounds: usize,
) -> Result<DistillationTrace> {
    config.validate()?;
    if max_rounds == 0 {
        return Err(Error::InvalidInput("max_rounds must be positive".into()));
    }
    if points.len() != spectrum.dim() {
        return Err(Error::DimensionMismatch {
            expected: spectrum.dim(),
            got: points.len(),
        });
    }
    let z0 = spectrum.rotate(y0)?;
    let mut states = vec![initial_state(&spectrum, y0, config)?];
    let mut collapsed_at = None;
    let mut collapse_norm_z = None;
    while states.len() < max_rounds {
        let last = states.last().expect("chain starts with one state");
        match distill_step(&spectrum, last, &z0, config)? {
            StepOutcome::Next(state) => states.push(state),
            StepOutcome::Collapsed { t, norm_z } => {
                collapsed_at = Some(t);
                collapse_norm_z = Some(norm_z);
                break;
            }
        }
    }
    Ok(DistillationTrace {
        kernel: *kernel,
        points: points.to_vec(),
        y0: y0.to_vec(),
        epsilon: config.epsilon,
        config: *config,
        spectrum,
        states,
        collapsed_at,
        collapse_norm_z,
    })
}

impl DistillationTrace {
    /// Number of recorded (non-collapsed) rounds.
    pub fn rounds(&self) -> usize {
        self.states.len()
    }

    pub fn z0(&self) -> &[f64] {
        &self.states[0].z
    }

    /// Multipliers `c_0, …, c_T`.
    pub fn c_history(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.c).collect()
    }

    fn check_round(&self, t: usize) -> Result<&DistillationState> {
        if let Some(state) = self.states.get(t) {
            return Ok(state);
        }
        match self.collapsed_at {
            Some(ct) if t >= ct => Err(Error::CollapsedRound { t }),
            _ => Err(Error::OutOfRange {
                t,
                len: self.states.len(),
            }),
        }
    }

    /// Training-point predictions of round `t`, `Vᵀ B_t z_0`.
    pub fn predictions_at(&self, t: usize) -> Result<Vec<f64>> {
        let state = self.check_round(t)?;
        let coeffs: Vec<f64> = state
            .b_diag
            .iter()
            .zip(self.z0())
            .map(|(b, z)| b * z)
            .collect();
        self.spectrum.unrotate(&coeffs)
    }

    /// Serialises one row per round: `t, c_t, norm_z, train_err_eps,
    /// train_err_y0, collapsed, b_1 … b_K`. A collapse, if reached, adds a
    /// final row for the zero function with an empty `c_t`.
    pub fn to_csv(&self) -> String {
        let k = self.spectrum.dim();
        let mut out = String::from("t,c_t,norm_z,train_err_eps,train_err_y0,collapsed");
        for i in 1..=k {
            let _ = write!(out, ",b_{i}");
        }
        out.push('\n');
        for s in &self.states {
            let _ = write!(
                out,
                "{},{},{},{},{},false",
                s.t,
                fmt_f64(s.c),
                fmt_f64(s.norm_z),
                fmt_f64(s.train_error),
                fmt_f64(s.train_error_vs_y0)
            );
            for b in &s.b_diag {
                let _ = write!(out, ",{}", fmt_f64(*b));
            }
            out.push('\n');
        }
        if let (Some(t), Some(norm_z)) = (self.collapsed_at, self.collapse_norm_z) {
            let kf = k as f64;
            let y0_sq: f64 = self.y0.iter().map(|v| v * v).sum();
            let _ = write!(
                out,
                "{t},,{},{},{},true",
                fmt_f64(norm_z),
                fmt_f64(norm_z * norm_z / kf),
                fmt_f64(y0_sq / kf)
            );
            for _ in 0..k {
                out.push_str(",0.0");
            }
            out.push('\n');
        }
        out
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// The evaluable model of round `t`, `f_t(x) = g_xᵀ (c_t I + G)⁻¹ y_t`.
pub fn model_at(trace: &DistillationTrace, t: usize) -> Result<RegressionModel> {
    let state = trace.check_round(t)?;
    let scaled: Vec<f64> = state
        .z
        .iter()
        .zip(trace.spectrum.eigvals())
        .map(|(z, d)| z / (state.c + d))
        .collect();
    Ok(RegressionModel {
        c: state.c,
        dual_coeffs: trace.spectrum.unrotate(&scaled)?,
        kernel: trace.kernel,
        data_points: trace.points.clone(),
        achieved_error: state.train_error,
    })
}

/// Rotated and scaled basis `p_x = D⁻¹ V g_x`; null directions map to zero.
pub fn basis_projection(
    spectrum: &GramSpectrum,
    kernel: &KernelSpec,
    points: &[Vec<f64>],
    x: &[f64],
) -> Result<Vec<f64>> {
    let gx = kernel_vector_from_points(kernel, points, x)?;
    let rotated = spectrum.rotate(&gx)?;
    Ok(rotated
        .iter()
        .zip(spectrum.eigvals())
        .map(|(r, &d)| if d > 0.0 { r / d } else { 0.0 })
        .collect())
}

//! Closed-form bounds on the distillation chain and their comparison with
//! simulated traces.
//!
//! Notation: `s = √(Kε)`, `r₀ = ‖z₀‖ / s`, `κ = d_max / d_min`.
//!
//! * norm lower bound: `‖z_t‖ ≥ aᵗ ‖z₀‖ − s b (aᵗ − 1)/(a − 1)` with
//!   `a = ((r₀−1)² + κ(2r₀−1)) / (r₀−1+κ)²` and `b = r₀² κ / (r₀−1+κ)²`
//! * guaranteed rounds: `t̲ = (r₀ − 1) / κ`
//! * basis ratio: `B_{t−1}[k] / B_{t−1}[j] ≥ ((r₀ − 1 + d_min/d_j) / (r₀ − 1 + d_min/d_k))ᵗ`
//!   for `d_k > d_j`, `t ≤ t̲`
//! * sparsity index: the minimum of that bound over adjacent eigenvalue pairs;
//!   at `t = t̲` it tends to `exp((d_min/κ) min_k (1/d_k − 1/d_{k+1}))` as ε → 0
//! * equivalent spectrum: `d†_k = c₀ / (Π_i (d_k + c_i) / d_k^{t+1} − 1)`
//!
//! Every bound is evaluated on the same [`GramSpectrum`] the chain ran on.
//! When the Gram matrix has exact null directions, `d_min`, `κ` and the
//! eigenvalue sequences refer to its positive part.

use serde::{Deserialize, Serialize};

use crate::distillation::{fmt_f64, DistillationTrace};
use crate::error::{Error, Result};
use crate::regression::{multiplier_bounds, solve_multiplier, training_error, FitConfig};
use crate::spectral::{norm, GramSpectrum};

/// Relative slack granted to observed-vs-bound comparisons.
pub const COMPARISON_SLACK: f64 = 1e-12;
/// Relative gap under which adjacent eigenvalues count as equal.
pub const DEGENERACY_TOLERANCE: f64 = 1e-14;

/// `r₀ = ‖z₀‖ / √(Kε)`.
pub fn r0(norm_z0: f64, k: usize, epsilon: f64) -> f64 {
    norm_z0 / (k as f64 * epsilon).sqrt()
}

fn check_r0(r0: f64) -> Result<()> {
    if !(r0 > 1.0) {
        return Err(Error::CollapseCondition {
            norm_sq: r0 * r0,
            threshold: 1.0,
        });
    }
    Ok(())
}

/// Lower bound on `‖z_t‖` given the initial ratio `r₀` and condition number.
pub fn z_norm_lower_bound(r0: f64, kappa: f64, k: usize, epsilon: f64, t: usize) -> Result<f64> {
    check_r0(r0)?;
    if !(kappa >= 1.0) {
        return Err(Error::PreconditionViolation(format!(
            "kappa must be >= 1, got {kappa}"
        )));
    }
    let s = (k as f64 * epsilon).sqrt();
    let norm_z0 = r0 * s;
    if t == 0 {
        return Ok(norm_z0);
    }
    let denom = (r0 - 1.0 + kappa).powi(2);
    // a − 1 = κ(1 − κ) / (r₀ − 1 + κ)², exact zero at κ = 1
    let a_minus_1 = kappa * (1.0 - kappa) / denom;
    let b = r0 * r0 * kappa / denom;
    let t = t as f64;
    let log_a = a_minus_1.ln_1p();
    let a_pow_t = (t * log_a).exp();
    let geometric = if a_minus_1 == 0.0 {
        t
    } else {
        (t * log_a).exp_m1() / a_minus_1
    };
    Ok(a_pow_t * norm_z0 - s * b * geometric)
}

/// `t̲ = (‖y₀‖/√(Kε) − 1) / κ`.
pub fn guaranteed_rounds(norm_y0: f64, k: usize, epsilon: f64, kappa: f64) -> Result<f64> {
    let r = r0(norm_y0, k, epsilon);
    check_r0(r)?;
    Ok((r - 1.0) / kappa)
}

/// `((r₀ − 1 + d_min/d_j) / (r₀ − 1 + d_min/d_k))ᵗ` without any check on `t`.
pub fn ratio_bound_value(r0: f64, d_min: f64, d_j: f64, d_k: f64, t: f64) -> f64 {
    let m = r0 - 1.0;
    // base − 1 = d_min (1/d_j − 1/d_k) / (m + d_min/d_k)
    let excess = d_min * (d_k - d_j) / (d_j * d_k) / (m + d_min / d_k);
    (t * excess.ln_1p()).exp()
}

/// Lower bound on `B_{t−1}[k] / B_{t−1}[j]` for `d_k > d_j`, valid for
/// `t ≤ t̲`.
#[allow(clippy::too_many_arguments)]
pub fn ratio_lower_bound(
    norm_y0: f64,
    k: usize,
    epsilon: f64,
    d_min: f64,
    kappa: f64,
    d_j: f64,
    d_k: f64,
    t: usize,
) -> Result<f64> {
    if !(d_k > d_j && d_j > 0.0) {
        return Err(Error::PreconditionViolation(format!(
            "need d_k > d_j > 0, got d_j = {d_j}, d_k = {d_k}"
        )));
    }
    let t_under = guaranteed_rounds(norm_y0, k, epsilon, kappa)?;
    if t as f64 > t_under * (1.0 + COMPARISON_SLACK) {
        return Err(Error::PreconditionViolation(format!(
            "round {t} exceeds the guaranteed horizon {t_under}"
        )));
    }
    Ok(ratio_bound_value(
        r0(norm_y0, k, epsilon),
        d_min,
        d_j,
        d_k,
        t as f64,
    ))
}

fn check_ascending(sorted: &[f64]) -> Result<()> {
    if sorted.len() < 2 {
        return Err(Error::PreconditionViolation(
            "sparsity needs at least two eigenvalues".into(),
        ));
    }
    let d_max = sorted[sorted.len() - 1];
    for w in sorted.windows(2) {
        if w[1] < w[0] {
            return Err(Error::PreconditionViolation(
                "eigenvalues must be sorted ascending".into(),
            ));
        }
        if w[1] - w[0] <= DEGENERACY_TOLERANCE * d_max {
            return Err(Error::DegenerateSpectrum { lo: w[0], hi: w[1] });
        }
    }
    Ok(())
}

/// Sparsity index `S_{B_{t−1}}` with real-valued exponent `t`.
pub fn sparsity_index(
    norm_y0: f64,
    k: usize,
    epsilon: f64,
    d_min: f64,
    sorted_eigvals: &[f64],
    t: f64,
) -> Result<f64> {
    let r = r0(norm_y0, k, epsilon);
    check_r0(r)?;
    check_ascending(sorted_eigvals)?;
    Ok(sorted_eigvals
        .windows(2)
        .map(|w| ratio_bound_value(r, d_min, w[0], w[1], t))
        .fold(f64::INFINITY, f64::min))
}

/// Sparsity index at the guaranteed horizon `t̲(ε)`.
pub fn sparsity_at_guaranteed(
    norm_y0: f64,
    k: usize,
    epsilon: f64,
    sorted_eigvals: &[f64],
) -> Result<f64> {
    check_ascending(sorted_eigvals)?;
    let d_min = sorted_eigvals[0];
    let kappa = sorted_eigvals[sorted_eigvals.len() - 1] / d_min;
    let t_under = guaranteed_rounds(norm_y0, k, epsilon, kappa)?;
    sparsity_index(norm_y0, k, epsilon, d_min, sorted_eigvals, t_under)
}

/// `exp((d_min/κ) · min_k (1/d_k − 1/d_{k+1}))`, the small-ε limit of the
/// sparsity index at `t̲`.
pub fn sparsity_limit(d_min: f64, kappa: f64, sorted_eigvals: &[f64]) -> Result<f64> {
    check_ascending(sorted_eigvals)?;
    let gap = sorted_eigvals
        .windows(2)
        .map(|w| (w[1] - w[0]) / (w[0] * w[1]))
        .fold(f64::INFINITY, f64::min);
    Ok((d_min / kappa * gap).exp())
}

/// Spectrum `d†` of the single ridge problem (multiplier `c₀`) whose
/// solution equals the chain's model after `c_history.len() − 1` rounds of
/// distillation. Null eigenvalues map to zero.
pub fn equivalent_spectrum(eigvals: &[f64], c_history: &[f64]) -> Result<Vec<f64>> {
    let Some(&c0) = c_history.first() else {
        return Err(Error::PreconditionViolation(
            "empty multiplier history".into(),
        ));
    };
    if c_history.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::PreconditionViolation(
            "multipliers must be positive".into(),
        ));
    }
    if eigvals.iter().any(|&d| d < 0.0) {
        return Err(Error::PreconditionViolation(
            "eigenvalues must be nonnegative".into(),
        ));
    }
    Ok(eigvals
        .iter()
        .map(|&d| {
            if d == 0.0 {
                return 0.0;
            }
            // Π (1 + c_i/d) − 1 without cancellation
            let log_p: f64 = c_history.iter().map(|c| (c / d).ln_1p()).sum();
            c0 / log_p.exp_m1()
        })
        .collect())
}

/// `(√(Σ d†), min_{k=0..K} (k/K + √((1/K) Σ_{j>k} d†_j)))`, the latter with
/// `d†` sorted nonincreasing. Constant factors are omitted.
pub fn generalization_proxies(d_dagger: &[f64], k: usize) -> (f64, f64) {
    let kf = k as f64;
    let trace_proxy = d_dagger.iter().sum::<f64>().sqrt();
    let mut sorted = d_dagger.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // tail[i] = Σ_{j ≥ i} sorted[j]
    let mut tail = vec![0.0; sorted.len() + 1];
    for i in (0..sorted.len()).rev() {
        tail[i] = tail[i + 1] + sorted[i];
    }
    let tail_proxy = (0..=sorted.len())
        .map(|i| i as f64 / kf + (tail[i] / kf).sqrt())
        .fold(f64::INFINITY, f64::min);
    (trace_proxy, tail_proxy)
}

/// One round of the early-stopping contrast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopRow {
    pub t: usize,
    /// Tolerance of the single fit matching round `t`'s error against `y₀`.
    pub epsilon_prime: f64,
    pub c_prime: f64,
    /// `d_k / (c′ + d_k)`.
    pub early_stop_diag: Vec<f64>,
    pub b_diag: Vec<f64>,
    /// max/min over the positive modes.
    pub early_stop_spread: f64,
    pub distill_spread: f64,
    pub distill_is_sparser: bool,
}

fn spread(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    hi / lo
}

/// For every round `t ≥ 1`, fits `y₀` once with the looser tolerance that
/// gives the same training error against `y₀` as round `t`, and contrasts
/// the two diagonal profiles.
pub fn early_stopping_comparison(trace: &DistillationTrace) -> Result<Vec<EarlyStopRow>> {
    if trace.rounds() < 2 {
        return Err(Error::PreconditionViolation(
            "early-stopping comparison needs at least two rounds".into(),
        ));
    }
    let spectrum = &trace.spectrum;
    let z0 = trace.z0();
    let null = spectrum.null_dim();
    let mut rows = Vec::with_capacity(trace.rounds() - 1);
    for state in &trace.states[1..] {
        let target = state.train_error_vs_y0;
        // a single fit's training error equals its tolerance, so ε′ is the target itself
        let config = FitConfig {
            epsilon: target,
            ..trace.config
        };
        let c_prime = solve_multiplier(spectrum, z0, &config).map_err(|e| Error::MatchFailure {
            target,
            reason: e.to_string(),
        })?;
        let achieved = training_error(spectrum, z0, c_prime)?;
        if (achieved - target).abs() > config.error_tolerance() {
            return Err(Error::MatchFailure {
                target,
                reason: format!("achieved {achieved}"),
            });
        }
        let early_stop_diag: Vec<f64> = spectrum
            .eigvals()
            .iter()
            .map(|d| d / (c_prime + d))
            .collect();
        let early_stop_spread = spread(&early_stop_diag[null..]);
        let distill_spread = spread(&state.b_diag[null..]);
        rows.push(EarlyStopRow {
            t: state.t,
            epsilon_prime: target,
            c_prime,
            early_stop_diag,
            b_diag: state.b_diag.clone(),
            early_stop_spread,
            distill_spread,
            distill_is_sparser: distill_spread > early_stop_spread,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundBound {
    pub t: usize,
    pub bound: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioBound {
    pub t: usize,
    pub j: usize,
    pub k: usize,
    pub bound: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyRow {
    pub t: usize,
    pub trace_proxy: f64,
    pub tail_proxy: f64,
}

/// Every bound and diagnostic for one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub k: usize,
    pub epsilon: f64,
    pub r0: f64,
    pub kappa: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub null_dim: usize,
    pub observed_rounds: usize,
    pub collapsed_at: Option<usize>,
    pub guaranteed_rounds: f64,
    pub z_lower_bounds: Vec<RoundBound>,
    pub ratio_bounds: Vec<RatioBound>,
    /// `S_{B_{t−1}}` for `t = 0 ..= observed_rounds`.
    pub sparsity_index_per_t: Vec<f64>,
    pub sparsity_at_t_under: f64,
    pub sparsity_limit: f64,
    /// Adjacent eigenvalues coincide; sparsity values then use the convention 1.
    pub degenerate_spectrum: bool,
    /// `d†` after the last recorded round.
    pub equivalent_spectrum: Vec<f64>,
    pub trace_proxy: f64,
    pub tail_proxy: f64,
    pub proxies_per_round: Vec<ProxyRow>,
    pub early_stopping: Vec<EarlyStopRow>,
}

/// Positive-mode indices `(j, k)` with `d_k > d_j`.
fn ordered_pairs(spectrum: &GramSpectrum) -> Vec<(usize, usize)> {
    let d = spectrum.eigvals();
    let tol = DEGENERACY_TOLERANCE * spectrum.d_max();
    let mut pairs = Vec::new();
    for j in spectrum.null_dim()..d.len() {
        for k in (j + 1)..d.len() {
            if d[k] - d[j] > tol {
                pairs.push((j, k));
            }
        }
    }
    pairs
}

impl TheoryReport {
    pub fn from_trace(trace: &DistillationTrace) -> Result<Self> {
        let spectrum = &trace.spectrum;
        let k = spectrum.dim();
        let eps = trace.epsilon;
        let norm_y0 = norm(&trace.y0);
        let kappa = spectrum.cond();
        let d_min = spectrum.d_min();
        let r = r0(norm_y0, k, eps);
        let t_under = guaranteed_rounds(norm_y0, k, eps, kappa)?;

        let z_lower_bounds = trace
            .states
            .iter()
            .map(|s| {
                Ok(RoundBound {
                    t: s.t,
                    bound: z_norm_lower_bound(r, kappa, k, eps, s.t)?,
                    observed: s.norm_z,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let d = spectrum.eigvals();
        let mut ratio_bounds = Vec::new();
        for t in 1..=trace.rounds() {
            if t as f64 > t_under * (1.0 + COMPARISON_SLACK) {
                break;
            }
            let b = &trace.states[t - 1].b_diag;
            for &(j, kk) in &ordered_pairs(spectrum) {
                ratio_bounds.push(RatioBound {
                    t,
                    j,
                    k: kk,
                    bound: ratio_lower_bound(norm_y0, k, eps, d_min, kappa, d[j], d[kk], t)?,
                    observed: b[kk] / b[j],
                });
            }
        }

        let positive = spectrum.positive_eigvals();
        let (sparsity_index_per_t, sparsity_at_t_under, sparsity_limit, degenerate) =
            match check_ascending(positive) {
                Ok(()) => (
                    (0..=trace.rounds())
                        .map(|t| sparsity_index(norm_y0, k, eps, d_min, positive, t as f64))
                        .collect::<Result<Vec<_>>>()?,
                    sparsity_index(norm_y0, k, eps, d_min, positive, t_under)?,
                    sparsity_limit(d_min, kappa, positive)?,
                    false,
                ),
                Err(Error::DegenerateSpectrum { .. }) => {
                    (vec![1.0; trace.rounds() + 1], 1.0, 1.0, true)
                }
                // a single positive mode has no pairs
                Err(Error::PreconditionViolation(_)) => {
                    (vec![1.0; trace.rounds() + 1], 1.0, 1.0, true)
                }
                Err(e) => return Err(e),
            };

        let c_history = trace.c_history();
        let mut proxies_per_round = Vec::with_capacity(c_history.len());
        let mut equivalent = Vec::new();
        for t in 0..c_history.len() {
            equivalent = equivalent_spectrum(d, &c_history[..=t])?;
            let (trace_proxy, tail_proxy) = generalization_proxies(&equivalent, k);
            proxies_per_round.push(ProxyRow {
                t,
                trace_proxy,
                tail_proxy,
            });
        }
        let last = proxies_per_round
            .last()
            .expect("at least one round")
            .clone();

        let early_stopping = if trace.rounds() >= 2 {
            early_stopping_comparison(trace)?
        } else {
            Vec::new()
        };

        Ok(TheoryReport {
            k,
            epsilon: eps,
            r0: r,
            kappa,
            d_min,
            d_max: spectrum.d_max(),
            null_dim: spectrum.null_dim(),
            observed_rounds: trace.rounds(),
            collapsed_at: trace.collapsed_at,
            guaranteed_rounds: t_under,
            z_lower_bounds,
            ratio_bounds,
            sparsity_index_per_t,
            sparsity_at_t_under,
            sparsity_limit,
            degenerate_spectrum: degenerate,
            equivalent_spectrum: equivalent,
            trace_proxy: last.trace_proxy,
            tail_proxy: last.tail_proxy,
            proxies_per_round,
            early_stopping,
        })
    }
}

/// One bound-vs-observation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub quantity: String,
    pub t: usize,
    pub bound: f64,
    pub observed: f64,
    pub satisfied: bool,
}

fn at_least(observed: f64, bound: f64) -> bool {
    observed >= bound - COMPARISON_SLACK * bound.abs()
}

fn at_most(observed: f64, bound: f64) -> bool {
    observed <= bound + COMPARISON_SLACK * bound.abs()
}

/// Checks a trace against every bound that applies to it.
///
/// Rows (by `quantity`):
///
/// * `constraint`: `|training error − ε|` recomputed from `z_t, c_t`, against the solver tolerance
/// * `b_recurrence`: largest relative deviation of `b_diag` from the product of
///   `d/(c_i + d)` over the recorded multipliers, against `1e-12`
/// * `multiplier_lower` / `multiplier_upper`: `c_t` against its closed-form bracket
/// * `z_norm`: `‖z_t‖` against its lower bound
/// * `guaranteed_rounds`: recorded rounds against `⌊t̲⌋` (only binding once collapsed)
/// * `ratio[j,k]`: `B_{t−1}[k]/B_{t−1}[j]` against its lower bound for `t ≤ t̲`
pub fn bound_checks(trace: &DistillationTrace) -> Result<Vec<BoundCheck>> {
    let report = TheoryReport::from_trace(trace)?;
    let spectrum = &trace.spectrum;
    let eps = trace.epsilon;
    let tol = trace.config.error_tolerance();
    let mut rows = Vec::new();

    for (i, s) in trace.states.iter().enumerate() {
        let err = training_error(spectrum, &s.z, s.c)?;
        let dev = (err - eps).abs();
        rows.push(BoundCheck {
            quantity: "constraint".into(),
            t: s.t,
            bound: tol,
            observed: dev,
            satisfied: dev <= tol,
        });

        let mut worst = 0.0_f64;
        for (j, &d) in spectrum.eigvals().iter().enumerate() {
            let fresh: f64 = trace.states[..=i].iter().map(|st| d / (st.c + d)).product();
            let dev = if fresh == 0.0 {
                s.b_diag[j].abs()
            } else {
                ((s.b_diag[j] - fresh) / fresh).abs()
            };
            worst = worst.max(if dev.is_nan() { f64::INFINITY } else { dev });
        }
        rows.push(BoundCheck {
            quantity: "b_recurrence".into(),
            t: s.t,
            bound: 1e-12,
            observed: worst,
            satisfied: worst <= 1e-12,
        });

        let (lo, hi) = multiplier_bounds(spectrum, &s.z, eps)?;
        rows.push(BoundCheck {
            quantity: "multiplier_lower".into(),
            t: s.t,
            bound: lo,
            observed: s.c,
            satisfied: at_least(s.c, lo),
        });
        rows.push(BoundCheck {
            quantity: "multiplier_upper".into(),
            t: s.t,
            bound: hi,
            observed: s.c,
            satisfied: at_most(s.c, hi),
        });
    }

    for zb in &report.z_lower_bounds {
        rows.push(BoundCheck {
            quantity: "z_norm".into(),
            t: zb.t,
            bound: zb.bound,
            observed: zb.observed,
            satisfied: at_least(zb.observed, zb.bound),
        });
    }

    let floor = report.guaranteed_rounds.floor();
    rows.push(BoundCheck {
        quantity: "guaranteed_rounds".into(),
        t: trace.rounds(),
        bound: floor,
        observed: trace.rounds() as f64,
        satisfied: trace.collapsed_at.is_none() || floor <= trace.rounds() as f64,
    });

    for rb in &report.ratio_bounds {
        rows.push(BoundCheck {
            quantity: format!("ratio[{},{}]", rb.j, rb.k),
            t: rb.t,
            bound: rb.bound,
            observed: rb.observed,
            satisfied: at_least(rb.observed, rb.bound),
        });
    }
    Ok(rows)
}

/// `quantity,t,bound,observed,satisfied` CSV.
pub fn bound_checks_csv(rows: &[BoundCheck]) -> String {
    let mut out = String::from("quantity,t,bound,observed,satisfied\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_field(&r.quantity),
            r.t,
            fmt_f64(r.bound),
            fmt_f64(r.observed),
            r.satisfied
        ));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains(',') {
        format!("\"{s}\"")
    } else {
        s.to_string()
    }
}

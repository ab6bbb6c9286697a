//! Experiment configuration, dataset sources and the file artifacts the CLI
//! writes.
//!
//! Every artifact is rendered to a string here; writing is left to the
//! caller so that identical configurations give byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{bound_checks, bound_checks_csv, BoundCheck, TheoryReport};
use crate::distillation::{fmt_f64, model_at, run_chain, DistillationTrace, DEFAULT_MAX_ROUNDS};
use crate::error::{Error, Result};
use crate::io::{load_csv, load_json, read_to_string, LabeledPoints};
use crate::kernels::{Dataset, KernelSpec};
use crate::regression::{fit_multiclass, FitConfig, RegressionModel};
use crate::rng::SplitMix64;

pub const DEFAULT_CURVE_SAMPLES: usize = 200;
/// Tolerance used with the `paper_sine` preset when none is given.
pub const PAPER_EPSILON: f64 = 0.045;

const PAPER_SINE_LABELS: [f64; 11] = [
    0.38476636465198066,
    1.2333967683416893,
    1.33232242218057,
    0.6920159488889518,
    -0.29756145531871736,
    -0.24189291901377769,
    -0.7964485769175675,
    -0.9616480167034174,
    -0.49672509509916934,
    -0.3469066003991437,
    0.5589512650600734,
];

/// The 11-point noisy sine sample on the grid `0, 0.1, …, 1`.
pub fn preset_paper_sine() -> Dataset {
    let xs: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
    Dataset::scalar(&xs, PAPER_SINE_LABELS.to_vec()).expect("preset is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub function: String,
    pub k: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    pub seed: u64,
}

/// `x_k = k/(K−1)`, `y_k = sin(2π x_k) + σ η_k` with `η` drawn from
/// [`SplitMix64`] normals.
pub fn generate_dataset(config: &GeneratorConfig) -> Result<Dataset> {
    if config.function != "sine" {
        return Err(Error::BadConfig(format!(
            "unknown generator function {:?}",
            config.function
        )));
    }
    if config.k < 2 {
        return Err(Error::BadConfig(format!(
            "generator needs k >= 2, got {}",
            config.k
        )));
    }
    if !(config.noise_sigma >= 0.0 && config.noise_sigma.is_finite()) {
        return Err(Error::BadConfig(
            "noise_sigma must be finite and nonnegative".into(),
        ));
    }
    let mut rng = SplitMix64::new(config.seed);
    let last = (config.k - 1) as f64;
    let xs: Vec<f64> = (0..config.k).map(|i| i as f64 / last).collect();
    let ys = xs
        .iter()
        .map(|x| {
            let clean = (std::f64::consts::TAU * x).sin();
            if config.noise_sigma == 0.0 {
                clean
            } else {
                clean + config.noise_sigma * rng.next_normal()
            }
        })
        .collect();
    Dataset::scalar(&xs, ys)
}

/// Exactly one of the fields must be set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
}

impl DataSource {
    pub fn paper_sine() -> Self {
        DataSource {
            preset: Some("paper_sine".into()),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let count = [
            self.preset.is_some(),
            self.csv.is_some(),
            self.json.is_some(),
            self.generator.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        if count != 1 {
            return Err(Error::BadConfig(format!(
                "exactly one data source (preset, csv, json, generator) required, got {count}"
            )));
        }
        if let Some(p) = &self.preset {
            if normalize_preset(p).is_none() {
                return Err(Error::BadConfig(format!("unknown preset {p:?}")));
            }
        }
        Ok(())
    }

    pub fn is_paper_preset(&self) -> bool {
        self.preset.as_deref().and_then(normalize_preset).is_some()
    }

    pub fn load(&self) -> Result<LabeledPoints> {
        self.validate()?;
        if self.preset.is_some() {
            return Ok(LabeledPoints::from(&preset_paper_sine()));
        }
        if let Some(p) = &self.csv {
            return load_csv(p);
        }
        if let Some(p) = &self.json {
            return load_json(p);
        }
        let generator = self.generator.as_ref().expect("validated");
        Ok(LabeledPoints::from(&generate_dataset(generator)?))
    }
}

/// Accepts `paper_sine` and `paper-sine`.
pub fn normalize_preset(name: &str) -> Option<&'static str> {
    match name {
        "paper_sine" | "paper-sine" => Some("paper_sine"),
        _ => None,
    }
}

/// Output file names; relative paths are taken under the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "default_trace_csv")]
    pub trace_csv: PathBuf,
    #[serde(default = "default_trace_json")]
    pub trace_json: PathBuf,
    #[serde(default = "default_report_json")]
    pub report_json: PathBuf,
    #[serde(default = "default_curve_csv")]
    pub curve_csv: PathBuf,
    #[serde(default = "default_bounds_csv")]
    pub bounds_csv: PathBuf,
    #[serde(default = "default_fit_json")]
    pub fit_json: PathBuf,
    #[serde(default = "default_curve_samples")]
    pub curve_samples: usize,
}

fn default_trace_csv() -> PathBuf {
    "trace.csv".into()
}
fn default_trace_json() -> PathBuf {
    "trace.json".into()
}
fn default_report_json() -> PathBuf {
    "report.json".into()
}
fn default_curve_csv() -> PathBuf {
    "curve.csv".into()
}
fn default_bounds_csv() -> PathBuf {
    "bounds.csv".into()
}
fn default_fit_json() -> PathBuf {
    "fit.json".into()
}
fn default_curve_samples() -> usize {
    DEFAULT_CURVE_SAMPLES
}

impl Default for Outputs {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

fn default_kernel() -> KernelSpec {
    KernelSpec::CubicSplineGreen
}

fn default_max_rounds() -> usize {
    DEFAULT_MAX_ROUNDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub data_source: DataSource,
    /// Falls back to 0.045 for the `paper_sine` preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ExperimentConfig {
    /// Spline kernel on the `paper_sine` preset.
    pub fn paper_sine(epsilon: f64) -> Self {
        ExperimentConfig {
            kernel: KernelSpec::CubicSplineGreen,
            data_source: DataSource::paper_sine(),
            epsilon: Some(epsilon),
            max_rounds: DEFAULT_MAX_ROUNDS,
            outputs: Outputs::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::BadConfig(e.to_string()))
    }

    /// Reads a config file; relative dataset paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config = Self::from_json(&read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.data_source.csv, &mut config.data_source.json]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn epsilon(&self) -> Result<f64> {
        match self.epsilon {
            Some(e) if e > 0.0 && e.is_finite() => Ok(e),
            Some(e) => Err(Error::BadConfig(format!(
                "epsilon must be positive, got {e}"
            ))),
            None if self.data_source.is_paper_preset() => Ok(PAPER_EPSILON),
            None => Err(Error::BadConfig("epsilon is required".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel
            .validate()
            .map_err(|e| Error::BadConfig(e.to_string()))?;
        self.data_source.validate()?;
        self.epsilon()?;
        if self.max_rounds == 0 {
            return Err(Error::BadConfig("max_rounds must be positive".into()));
        }
        if self.outputs.curve_samples < 2 {
            return Err(Error::BadConfig("curve_samples must be at least 2".into()));
        }
        Ok(())
    }

    pub fn fit_config(&self) -> Result<FitConfig> {
        FitConfig::new(self.epsilon()?)
    }
}

/// Evenly spaced evaluation points: [0, 1] for the spline kernel, the data
/// range otherwise. `None` for inputs of more than one dimension.
pub fn curve_grid(kernel: &KernelSpec, points: &[Vec<f64>], samples: usize) -> Option<Vec<f64>> {
    if points.iter().any(|p| p.len() != 1) || samples < 2 {
        return None;
    }
    let (lo, hi) = match kernel {
        KernelSpec::CubicSplineGreen => (0.0, 1.0),
        KernelSpec::Gaussian { .. } => points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[0]), hi.max(p[0]))
            }),
    };
    let last = (samples - 1) as f64;
    Some(
        (0..samples)
            .map(|i| {
                if i + 1 == samples {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / last
                }
            })
            .collect(),
    )
}

fn curve_csv(header: &[String], grid: &[f64], models: &[&RegressionModel]) -> Result<String> {
    let mut out = String::from("x");
    for h in header {
        let _ = write!(out, ",{h}");
    }
    out.push('\n');
    for &x in grid {
        out.push_str(&fmt_f64(x));
        for m in models {
            let _ = write!(out, ",{}", fmt_f64(m.predict(&[x])?));
        }
        out.push('\n');
    }
    Ok(out)
}

/// `x, f_t0, f_t1, …` over `grid`.
pub fn distill_curve_csv(trace: &DistillationTrace, grid: &[f64]) -> Result<String> {
    let models = (0..trace.rounds())
        .map(|t| model_at(trace, t))
        .collect::<Result<Vec<_>>>()?;
    let header: Vec<String> = (0..trace.rounds()).map(|t| format!("f_t{t}")).collect();
    curve_csv(&header, grid, &models.iter().collect::<Vec<_>>())
}

/// Everything `distill` writes.
#[derive(Debug, Clone)]
pub struct DistillArtifacts {
    pub trace: DistillationTrace,
    pub report: TheoryReport,
    pub trace_csv: String,
    pub trace_json: String,
    pub report_json: String,
    pub curve_csv: Option<String>,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn run_distill(config: &ExperimentConfig) -> Result<DistillArtifacts> {
    config.validate()?;
    let data = config.data_source.load()?.primary()?;
    let trace = run_chain(
        &data,
        &config.kernel,
        &config.fit_config()?,
        config.max_rounds,
    )?;
    let report = TheoryReport::from_trace(&trace)?;
    let curve_csv = match curve_grid(&config.kernel, &trace.points, config.outputs.curve_samples) {
        Some(grid) => Some(distill_curve_csv(&trace, &grid)?),
        None => None,
    };
    Ok(DistillArtifacts {
        trace_csv: trace.to_csv(),
        trace_json: to_json(&trace)?,
        report_json: to_json(&report)?,
        curve_csv,
        report,
        trace,
    })
}

pub fn parse_trace_json(text: &str) -> Result<DistillationTrace> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("trace: {e}")))
}

/// Bound checks of a trace, with their CSV rendering.
pub fn run_bounds(trace: &DistillationTrace) -> Result<(Vec<BoundCheck>, String)> {
    let rows = bound_checks(trace)?;
    let csv = bound_checks_csv(&rows);
    Ok((rows, csv))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub epsilon: f64,
    pub label_names: Vec<String>,
    pub models: Vec<RegressionModel>,
}

/// Everything `fit` writes.
#[derive(Debug, Clone)]
pub struct FitArtifacts {
    pub summary: FitSummary,
    pub fit_json: String,
    pub curve_csv: Option<String>,
    /// Curve evaluated on the grid, one vector per label column.
    pub curves: Option<(Vec<f64>, Vec<Vec<f64>>)>,
}

/// One constrained fit per label column. The first failing column aborts.
pub fn run_fit(config: &ExperimentConfig) -> Result<FitArtifacts> {
    config.validate()?;
    let data = config.data_source.load()?;
    let fit_config = config.fit_config()?;
    let models = fit_multiclass(&data.points, &data.label_sets, &config.kernel, &fit_config)?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let header: Vec<String> = if models.len() == 1 {
        vec!["f".into()]
    } else {
        (1..=models.len()).map(|q| format!("f_{q}")).collect()
    };
    let (curve_csv, curves) =
        match curve_grid(&config.kernel, &data.points, config.outputs.curve_samples) {
            Some(grid) => {
                let csv = curve_csv(&header, &grid, &models.iter().collect::<Vec<_>>())?;
                let values = models
                    .iter()
                    .map(|m| {
                        grid.iter()
                            .map(|&x| m.predict(&[x]))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                (Some(csv), Some((grid, values)))
            }
            None => (None, None),
        };
    let summary = FitSummary {
        epsilon: fit_config.epsilon,
        label_names: data.label_names,
        models,
    };
    Ok(FitArtifacts {
        fit_json: to_json(&summary)?,
        summary,
        curve_csv,
        curves,
    })
}

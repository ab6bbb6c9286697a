//! `distillkit`: constrained kernel regression and self-distillation runs.
//!
//! Exit codes: 0 success, 1 configuration or IO error, 2 collapse (the labels
//! are already within the tolerance), 3 a bound check failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use distillkit::experiment::{
    normalize_preset, parse_trace_json, run_bounds, run_distill, run_fit, DataSource,
    ExperimentConfig,
};
use distillkit::io::{read_to_string, write_atomic};
use distillkit::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_COLLAPSE: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "distillkit",
    version,
    about = "Green's-function regression and self-distillation dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single constrained fit (one model per label column) and its curve.
    Fit(Common),
    /// Run the distillation chain; write trace, report and curves.
    Distill(Common),
    /// Compare a trace against every bound; exit 3 on any violation.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// Check an existing trace JSON instead of running a chain.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in dataset (`paper-sine`); replaces the config's data source.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Output directory; defaults to $DISTILLKIT_OUT_DIR, then `.`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    curve_samples: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None if self.preset.is_some() => ExperimentConfig::from_json("{}")?,
            None => {
                return Err(Error::BadConfig(
                    "either --config or --preset is required".into(),
                ))
            }
        };
        if let Some(p) = &self.preset {
            let name = normalize_preset(p)
                .ok_or_else(|| Error::BadConfig(format!("unknown preset {p:?}")))?;
            config.data_source = DataSource {
                preset: Some(name.into()),
                ..Default::default()
            };
        }
        if let Some(e) = self.epsilon {
            config.epsilon = Some(e);
        }
        if let Some(m) = self.max_rounds {
            config.max_rounds = m;
        }
        if let Some(s) = self.curve_samples {
            config.outputs.curve_samples = s;
        }
        config.validate()?;
        Ok(config)
    }

    fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os("DISTILLKIT_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

fn write(dir: &Path, name: &Path, contents: &str) -> Result<PathBuf, Error> {
    let path = dir.join(name);
    write_atomic(&path, contents.as_bytes())?;
    Ok(path)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::CollapseCondition { .. } => EXIT_COLLAPSE,
        _ => EXIT_CONFIG,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(&err))
}

fn cmd_fit(common: &Common) -> Result<u8, Error> {
    let config = common.resolve()?;
    let out = common.out_dir();
    let artifacts = run_fit(&config)?;
    for (name, m) in artifacts
        .summary
        .label_names
        .iter()
        .zip(&artifacts.summary.models)
    {
        println!(
            "{name}: c = {:?}, training error = {:?}",
            m.c, m.achieved_error
        );
    }
    // noiseless sine: report the distance to the generating function
    if let (Some(g), Some((grid, values))) = (&config.data_source.generator, &artifacts.curves) {
        if g.noise_sigma == 0.0 {
            let dev = grid
                .iter()
                .zip(&values[0])
                .map(|(x, f)| (f - (std::f64::consts::TAU * x).sin()).abs())
                .fold(0.0, f64::max);
            println!("max |f - sin(2πx)| on the curve grid: {dev:?}");
        }
    }
    let path = write(&out, &config.outputs.fit_json, &artifacts.fit_json)?;
    println!("wrote {}", path.display());
    if let Some(csv) = &artifacts.curve_csv {
        let path = write(&out, &config.outputs.curve_csv, csv)?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn cmd_distill(common: &Common) -> Result<u8, Error> {
    let config = common.resolve()?;
    let out = common.out_dir();
    let a = run_distill(&config)?;
    match a.trace.collapsed_at {
        Some(t) => println!(
            "{} rounds (t = 0..{}); collapsed at t = {t}",
            a.trace.rounds(),
            a.trace.rounds() - 1
        ),
        None => println!(
            "{} rounds without collapse (max_rounds reached)",
            a.trace.rounds()
        ),
    }
    println!("guaranteed rounds bound: {:?}", a.report.guaranteed_rounds);
    let mut files = vec![
        (&config.outputs.trace_csv, &a.trace_csv),
        (&config.outputs.trace_json, &a.trace_json),
        (&config.outputs.report_json, &a.report_json),
    ];
    if let Some(csv) = &a.curve_csv {
        files.push((&config.outputs.curve_csv, csv));
    }
    for (name, contents) in files {
        let path = write(&out, name, contents)?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn cmd_bounds(common: &Common, trace: Option<&Path>) -> Result<u8, Error> {
    let (trace, bounds_name) = match trace {
        Some(path) => {
            let name = match &common.config {
                Some(_) => common.resolve()?.outputs.bounds_csv,
                None => PathBuf::from("bounds.csv"),
            };
            (parse_trace_json(&read_to_string(path)?)?, name)
        }
        None => {
            let config = common.resolve()?;
            (run_distill(&config)?.trace, config.outputs.bounds_csv)
        }
    };
    let (rows, csv) = run_bounds(&trace)?;
    let path = write(&common.out_dir(), &bounds_name, &csv)?;
    let violated: Vec<_> = rows.iter().filter(|r| !r.satisfied).collect();
    println!(
        "{} checks, {} violated; wrote {}",
        rows.len(),
        violated.len(),
        path.display()
    );
    for r in &violated {
        eprintln!(
            "violated: {} at t = {}: bound {:?}, observed {:?}",
            r.quantity, r.t, r.bound, r.observed
        );
    }
    Ok(if violated.is_empty() {
        0
    } else {
        EXIT_VIOLATION
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(c) => cmd_fit(c),
        Command::Distill(c) => cmd_distill(c),
        Command::Bounds { common, trace } => cmd_bounds(common, trace.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => fail(e),
    }
}

//! `semibiv`: evaluate, validate, decompose and sample bivariate lifetime
//! models from a JSON config.
//!
//! Exit codes: 0 ok/valid, 1 reproduction failure, 2 usage or config,
//! 3 invalid model, 4 inconclusive, 5 I/O.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{ModelConfig, Overrides};
use output::Format;

pub mod exit {
    pub const OK: u8 = 0;
    pub const REPRODUCTION: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const INVALID: u8 = 3;
    pub const INCONCLUSIVE: u8 = 4;
    pub const IO: u8 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    /// The model is not a bivariate distribution.
    #[error("{0}")]
    Invalid(String),
    /// A numerical procedure did not settle.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io(_) => exit::IO,
            CliError::Invalid(_) => exit::INVALID,
            CliError::Numeric(_) => exit::INCONCLUSIVE,
        }
    }
}

impl From<semibiv::Error> for CliError {
    fn from(e: semibiv::Error) -> Self {
        use semibiv::Error as E;
        let msg = e.to_string();
        match e {
            E::Io(_) => CliError::Io(msg),
            E::Domain { .. } | E::Parse(_) => CliError::Usage(msg),
            E::Model(_)
            | E::Divergent
            | E::NegativeDensity { .. }
            | E::UndefinedDensity(_)
            | E::UndefinedComponent(_) => CliError::Invalid(msg),
            E::NonConvergent { .. } | E::Quadrature { .. } | E::Bracket(_) | E::Sampler(_) => {
                CliError::Numeric(msg)
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "semibiv", version, about = "Bivariate lifetime models with a singular diagonal component")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON model config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write output here instead of stdout. For `validate` the JSON report
    /// goes here and the `--format` rendering to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Sample size.
    #[arg(long, global = true)]
    n: Option<usize>,

    /// Overrides `theta` (one value) or `theta123` (three comma-separated values).
    #[arg(long, global = true)]
    theta: Option<String>,

    /// Log-spaced validation grid with this many knots.
    #[arg(long, global = true)]
    grid_knots: Option<usize>,

    /// Relative tolerance of the inequality checks.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Survival, absolutely continuous density and hazard gradient at a point.
    #[command(allow_negative_numbers = true)]
    Eval { x1: f64, x2: f64 },
    /// Probability of the rectangle (a1, b1] x (a2, b2].
    #[command(allow_negative_numbers = true)]
    Rect { a1: f64, b1: f64, a2: f64, b2: f64 },
    /// Grid check of the validity conditions and the two-increasing property.
    Validate,
    /// Residual of the functional equation on the grid.
    CheckFe,
    /// Absolutely continuous and singular weights.
    Decompose,
    /// Draw `--n` pairs as CSV.
    Sample,
    /// Reproduce the linear-failure-rate counter-example.
    Counterexample,
}

fn write_output(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    let res = match out {
        Some(path) => std::fs::write(path, text).map_err(|e| (path.display().to_string(), e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| ("stdout".to_string(), e))
        }
    };
    res.map_err(|(what, e)| CliError::Io(format!("cannot write {what}: {e}")))
}

fn load(cli: &Cli) -> Result<ModelConfig, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Usage("this subcommand needs --config <path>".into()))?;
    let overrides = Overrides {
        theta: cli.theta.clone(),
        grid_knots: cli.grid_knots,
        tol: cli.tol,
    };
    ModelConfig::load(path, &overrides)
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let out = cli.out.as_deref();
    let outcome = match cli.command {
        Command::Counterexample => commands::counterexample(cli.format)?,
        Command::Eval { x1, x2 } => commands::eval(&load(cli)?, x1, x2, cli.format)?,
        Command::Rect { a1, b1, a2, b2 } => commands::rect(&load(cli)?, [a1, b1, a2, b2], cli.format)?,
        Command::CheckFe => commands::check_fe(&load(cli)?, cli.format)?,
        Command::Decompose => commands::decompose(&load(cli)?, cli.format)?,
        Command::Validate => {
            let report = commands::validation_report(&load(cli)?)?;
            if let Some(path) = out {
                write_output(&commands::report_json(&report)?, Some(path))?;
            }
            write_output(&commands::render_report(&report, cli.format)?, None)?;
            return Ok(commands::verdict_code(report.verdict));
        }
        Command::Sample => {
            let n = cli.n.ok_or_else(|| CliError::Usage("sample needs --n <count>".into()))?;
            let cfg = load(cli)?;
            let batch = commands::sample(&cfg, n, cli.seed)?;
            let mut buf = Vec::new();
            batch.write_csv(&mut buf)?;
            write_output(&String::from_utf8_lossy(&buf), out)?;
            eprintln!("n = {}, seed = {}, ties = {}", batch.n, batch.seed, batch.tie_count);
            return Ok(exit::OK);
        }
    };
    write_output(&outcome.text, out)?;
    Ok(outcome.code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

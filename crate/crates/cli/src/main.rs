//! Batch command line for the market-making toolkit.
//!
//! The run plan lives in a JSON config (see `configs/` at the workspace
//! root); a few numerics can be overridden from the command line. Exit
//! codes: 0 on success, 2 for configuration problems, 3 for numerical
//! failures.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

mod config;
mod runner;
mod svg;

use config::RunConfig;
use mm_core::CoreError;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NewtonConvergence { .. }
            | CoreError::Bracketing { .. }
            | CoreError::Curvature { .. }
            | CoreError::GridTooLarge { .. }
            | CoreError::Identifiability { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "mm-cli", version, about = "optimal market-making solves, approximations, simulations and calibration")]
struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV/SVG/JSON artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Override the solver time step in seconds.
    #[arg(long)]
    dt: Option<f64>,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut config = RunConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        config.numerics.seed = seed;
    }
    if let Some(paths) = cli.paths {
        config.numerics.n_paths = paths;
    }
    if let Some(dt) = cli.dt {
        config.numerics.dt = dt;
    }
    config.validate()?;
    runner::execute(&config, &cli.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Numeric(_) => ExitCode::from(3),
            }
        }
    }
}

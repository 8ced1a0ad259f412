//! Experiment driver for `coupledpf`: likelihood profiles, finite-difference
//! gain studies, correlated PMMH runs, Rhee-Glynn smoothing studies and
//! oracle self-checks. Every CSV starts with a comment line carrying the
//! config hash and seed.

pub mod config;
pub mod experiments;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

pub use config::{ExperimentConfig, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config field '{field}': {message}")]
    Config { field: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] coupledpf::Error),
    #[error("{0} replicates hit the iteration cap (pass --allow-incomplete to accept)")]
    Incomplete(usize),
    #[error("{0} self-checks failed")]
    ChecksFailed(usize),
}

#[derive(Debug, Parser)]
#[command(name = "coupledpf", version, about = "Coupled particle filter experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a path and write states.csv and observations.csv.
    Simulate(Overrides),
    /// Log-likelihood over a parameter grid, rerunning each filter conditionally on the previous one.
    ProfileLikelihood(Overrides),
    /// Correlation and gain of finite-difference score estimators.
    FdScore(Overrides),
    /// Correlated particle marginal Metropolis-Hastings.
    Pmmh(Overrides),
    /// Rhee-Glynn smoothing replicates and their aggregate.
    RgSmooth(Overrides),
    /// Oracle self-checks.
    Validate(Overrides),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::ProfileLikelihood(_) => "profile-likelihood",
            Command::FdScore(_) => "fd-score",
            Command::Pmmh(_) => "pmmh",
            Command::RgSmooth(_) => "rg-smooth",
            Command::Validate(_) => "validate",
        }
    }

    fn overrides(&self) -> &Overrides {
        match self {
            Command::Simulate(o)
            | Command::ProfileLikelihood(o)
            | Command::FdScore(o)
            | Command::Pmmh(o)
            | Command::RgSmooth(o)
            | Command::Validate(o) => o,
        }
    }
}

/// Resolve the configuration and run the experiment.
pub fn run(command: &Command) -> Result<serde_json::Value, HarnessError> {
    let cfg = command.overrides().resolve(command.name())?;
    experiments::dispatch(&cfg)
}

/// Entry point shared by the binary and the tests. Returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli.command) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

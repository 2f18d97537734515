//! `robcred`: robust credibility from the command line.

mod claims;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "robcred", version, about = "Robust Buhlmann credibility with trimmed and winsorized means")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Structural parameters and credibility factor of a parametric model pair.
    Structural(StructuralArgs),
    /// Run a contamination study from a TOML config.
    Simulate(SimulateArgs),
    /// Nonparametric premiums for grouped losses in a CSV file.
    Empirical(EmpiricalArgs),
    /// Check monotonicity, homogeneity and translation invariance.
    Coherence(CoherenceArgs),
    /// Asymptotic variances of the trimmed and winsorized means.
    Variance(VarianceArgs),
}

#[derive(clap::Args, Debug)]
struct StructuralArgs {
    /// exp-gamma, pareto-gamma, lognormal-normal or loglogistic-normal.
    #[arg(long)]
    pair: String,
    /// Gamma prior shape.
    #[arg(long)]
    alpha: Option<f64>,
    /// Gamma prior rate.
    #[arg(long)]
    beta: Option<f64>,
    /// Pareto shape.
    #[arg(long)]
    t: Option<f64>,
    /// Normal prior mean.
    #[arg(long)]
    mu: Option<f64>,
    /// Normal prior variance.
    #[arg(long)]
    v2: Option<f64>,
    /// Lognormal or log-logistic scale.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    /// T (trimmed) or W (winsorized).
    #[arg(long, default_value = "T")]
    method: String,
    /// Number of observations behind the credibility factor.
    #[arg(long, default_value_t = 1.0)]
    n: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scale {
    Desk,
    Paper,
}

#[derive(clap::Args, Debug)]
struct SimulateArgs {
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for `ratios.csv`, `ratios_long.csv` and `ratios.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    scale: Scale,
}

#[derive(clap::Args, Debug)]
struct EmpiricalArgs {
    csv: PathBuf,
    #[arg(long, default_value = "group")]
    group_col: String,
    #[arg(long, default_value = "loss")]
    loss_col: String,
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    /// One value or a comma-separated sweep.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    q: Vec<f64>,
    #[arg(long, default_value = "T")]
    method: String,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct CoherenceArgs {
    #[arg(long, default_value_t = 0.05)]
    p: f64,
    #[arg(long, default_value_t = 0.05)]
    q: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(clap::Args, Debug)]
struct VarianceArgs {
    /// For example `exp:theta=1` or `pareto:t=3,theta=1`.
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    #[arg(long, default_value_t = 0.0)]
    q: f64,
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or parameters (exit 1).
    Usage(String),
    /// Unreadable or unusable input data (exit 2).
    Data(String),
    /// A numerical routine did not converge (exit 3).
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<robcred::Error> for CliError {
    fn from(e: robcred::Error) -> Self {
        use robcred::Error as E;
        let msg = e.to_string();
        match e {
            E::NonConvergence { .. } => CliError::Numeric(msg),
            E::EmptyWindow { .. } | E::InsufficientData(_) => CliError::Data(msg),
            _ => CliError::Usage(msg),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Structural(a) => commands::structural(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Empirical(a) => commands::empirical(&a),
        Command::Coherence(a) => commands::coherence(&a),
        Command::Variance(a) => commands::variance(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

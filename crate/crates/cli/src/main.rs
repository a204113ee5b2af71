use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod output;

/// Spectra of 1-D Schrödinger operators whose potential is a signed measure.
#[derive(Debug, Parser, Serialize)]
#[command(name = "qdspec", version)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,

    /// Potential description (JSON).
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,
    /// Truncation parameters, increasing.
    #[arg(long = "L", global = true, value_delimiter = ',')]
    pub l_list: Vec<f64>,
    #[arg(long, global = true, default_value_t = 4)]
    pub k_max: usize,
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol_lambda: f64,
    #[arg(long, global = true, default_value_t = 1e-12)]
    pub tol_ode: f64,
    /// Window length (Brinck cap, Molchanov window, form bound).
    #[arg(long, global = true)]
    pub h: Option<f64>,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 1000)]
    pub cases: u64,
    /// Directory for report files. Without it the main report goes to stdout.
    #[serde(skip)]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Md,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Command {
    /// Lower mass constant C and the bound -2C².
    Brinck,
    /// Window masses over [a, a+h) and their running infimum.
    Molchanov {
        #[arg(long, default_value_t = 2000)]
        n_starts: usize,
    },
    /// Prüfer angle and log-amplitude along the domain at one λ.
    Shoot {
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long, default_value_t = 1000)]
        points: usize,
    },
    /// Dirichlet eigenvalues over a sweep of truncation windows.
    Spectrum {
        /// Reference energy for the counting function N(E_ref, L).
        #[arg(long, default_value_t = 10.0)]
        e_ref: f64,
        /// Grow windows as [lo, lo + L] instead of symmetrically about the domain midpoint.
        #[arg(long)]
        half_line: bool,
    },
    /// Quadratic form and improper potential energy of a sampled function.
    Form {
        /// CSV with columns x, value.
        #[arg(long)]
        u: PathBuf,
        #[arg(long, default_value_t = 8)]
        cuts: usize,
    },
    /// Randomized inequality suites.
    Verify {
        /// One suite, or every suite when omitted.
        #[arg(long)]
        suite: Option<String>,
    },
    /// Both square-root combs side by side with a markdown summary.
    Reproduce {
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 30.0)]
        length: f64,
        #[arg(long, default_value_t = 10.0)]
        e_ref: f64,
    },
}

/// Why a run did not succeed, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Violation(String),
    Numeric(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Violation(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }
}

fn main() -> ExitCode {
    let config = RunConfig::parse();
    match commands::run(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Input(e) => eprintln!("input error: {e:#}"),
                Failure::Violation(msg) => eprintln!("theorem violation: {msg}"),
                Failure::Numeric(e) => eprintln!("numeric failure: {e:#}"),
            }
            ExitCode::from(failure.code())
        }
    }
}

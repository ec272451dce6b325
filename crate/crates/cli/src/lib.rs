//! Command-line front end: parse a model file, dispatch to the computation
//! routines, and emit CSV with a reproducible metadata header.
//!
//! Exit codes: 2 for unreadable/unparsable inputs, 3 for validation
//! failures (bad model, bad grids, inapplicable method), 4 for numerical
//! failures. Every error prints a single machine-readable line on stderr:
//! `error: code=<code> reason="..."`.

pub mod commands;
pub mod output;
pub mod spec_file;

use clap::{Parser, ValueEnum};
use std::fmt;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CommandName {
    Transform,
    Invert,
    Exact,
    Simulate,
    Asymptotics,
    Bound,
    Multigroup,
    Compare,
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CommandName::Transform => "transform",
            CommandName::Invert => "invert",
            CommandName::Exact => "exact",
            CommandName::Simulate => "simulate",
            CommandName::Asymptotics => "asymptotics",
            CommandName::Bound => "bound",
            CommandName::Multigroup => "multigroup",
            CommandName::Compare => "compare",
        };
        write!(f, "{name}")
    }
}

/// Full run configuration; clap derives the flag grammar from this.
#[derive(Debug, Parser, Clone)]
#[command(
    name = "ruin",
    about = "Ruin probabilities for transient obligor portfolios",
    version
)]
pub struct RunConfig {
    /// Model specification file (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Which computation to run.
    #[arg(long)]
    pub command: CommandName,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Random seed for the simulation commands.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads for the simulation commands.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,

    /// Transform variable grid (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub gamma: Vec<f64>,
    /// Exponential horizon rate (transform/invert/multigroup).
    #[arg(long)]
    pub theta: Option<f64>,
    /// Obligor count / recursion level.
    #[arg(long)]
    pub n: Option<usize>,
    /// Level list (bound command; defaults to 1..=n).
    #[arg(long, value_delimiter = ',')]
    pub n_list: Vec<usize>,
    /// Per-group obligor counts (multigroup command).
    #[arg(long, value_delimiter = ',')]
    pub counts: Vec<usize>,
    /// Initial reserve.
    #[arg(long)]
    pub u: Option<f64>,
    /// Reserve grid (invert command).
    #[arg(long, value_delimiter = ',')]
    pub u_grid: Vec<f64>,
    /// Horizon grid (invert/simulate/compare commands).
    #[arg(long, value_delimiter = ',')]
    pub t_grid: Vec<f64>,
    /// Single horizon (asymptotics/exact commands).
    #[arg(long)]
    pub t: Option<f64>,
    /// Monte Carlo runs.
    #[arg(long)]
    pub runs: Option<u64>,
    /// Estimator for the simulate command: "direct" or "is".
    #[arg(long)]
    pub method: Option<String>,
    /// Method pair for the compare command, e.g. "exact,is".
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Transform variant: "base", "brownian" or "nondefault".
    #[arg(long)]
    pub variant: Option<String>,
    /// Reserve-axis cells of the quadrature grid.
    #[arg(long)]
    pub grid_nu: Option<usize>,
    /// Time-axis cells of the quadrature grid.
    #[arg(long)]
    pub grid_nt: Option<usize>,
    /// Reserve-axis extent override of the quadrature grid.
    #[arg(long)]
    pub u_max: Option<f64>,
    /// Also export the full level-n grid (exact command).
    #[arg(long)]
    pub emit_grid: Option<PathBuf>,
    /// Curve resolution for the asymptotics command.
    #[arg(long)]
    pub points: Option<usize>,
}

/// Error classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or unparsable input (exit 2).
    Parse(String),
    /// Invalid model or configuration (exit 3).
    Validation(String),
    /// Numerical failure (exit 4).
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn reason(&self) -> &str {
        match self {
            CliError::Parse(m) | CliError::Validation(m) | CliError::Numerical(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error: code={} reason={:?}", self.code(), self.reason())
    }
}

impl std::error::Error for CliError {}

impl From<ruin_core::Error> for CliError {
    fn from(err: ruin_core::Error) -> Self {
        use ruin_core::Error as E;
        match err {
            E::Bracketing { .. } | E::NonConvergent { .. } | E::PoleEvaluation { .. } => {
                CliError::Numerical(err.to_string())
            }
            _ => CliError::Validation(err.to_string()),
        }
    }
}

/// Execute a configuration; returns the one-line summary written to stdout.
pub fn run(config: &RunConfig) -> Result<String, CliError> {
    let parsed = spec_file::load(&config.model)?;
    let summary = match config.command {
        CommandName::Transform => commands::transform(config, &parsed)?,
        CommandName::Invert => commands::invert(config, &parsed)?,
        CommandName::Exact => commands::exact(config, &parsed)?,
        CommandName::Simulate => commands::simulate(config, &parsed)?,
        CommandName::Asymptotics => commands::asymptotics(config, &parsed)?,
        CommandName::Bound => commands::bound(config, &parsed)?,
        CommandName::Multigroup => commands::multigroup(config, &parsed)?,
        CommandName::Compare => commands::compare(config, &parsed)?,
    };
    Ok(summary)
}

mod commands;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sel_core::SelError;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "sel", version, about = "Finite-difference solver for -Δu = d^(-β) u^(-α), u = 0 on the boundary")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance; writes report.json and solution.csv.
    Solve(SolveArgs),
    /// Exponent fits and H¹ verdicts over an (α, β) grid; writes sweep.csv.
    Sweep(SweepArgs),
    /// λ₁ and μ₁ per refinement level; writes spectrum.json.
    Spectrum(LevelArgs),
    /// Full regularity report; writes regularity.json and sobolev.csv.
    Regularity(RegularityArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Interval,
    Rectangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    /// Two-sided monotone iteration.
    Monotone,
    /// Newton on the ε-regularized problem (see --eps).
    Regularized,
    /// Newton with dense LU (n <= 64).
    Dense,
    /// Newton with sparse Jacobian solves.
    Newton,
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: f64,
    #[arg(long, value_enum, default_value_t = Domain::Interval)]
    pub domain: Domain,
    /// Side lengths; rectangle uses both, interval uses --width.
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,
    #[arg(long, default_value_t = 1.0)]
    pub height: f64,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = SolverMethod::Monotone)]
    pub method: SolverMethod,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// Accept α + β = 1 with α < 1 (nominal barrier constants, log-corrected boundary behaviour).
    #[arg(long)]
    pub allow_borderline: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub alpha_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub beta_list: Vec<f64>,
    /// Finest resolution; the H¹ and q scans also use n/4 and n/2.
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = SolverMethod::Monotone)]
    pub method: SolverMethod,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct LevelArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub levels: Vec<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct RegularityArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub levels: Vec<usize>,
    /// Exponents for the Sobolev scan; defaults to 1, 1.25, ..., 6.
    #[arg(long, value_delimiter = ',')]
    pub q_grid: Vec<f64>,
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub type Outcome<T> = Result<T, Failure>;

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    pub fn non_convergence(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn exit_code(e: &SelError) -> u8 {
    match e {
        SelError::SolverStagnation { .. }
        | SelError::ComparisonPrincipleViolation { .. }
        | SelError::EigenNonConvergence { .. }
        | SelError::OrderingViolation { .. }
        | SelError::MaxIterExceeded { .. }
        | SelError::NewtonStagnation { .. }
        | SelError::InconsistentClassification { .. } => 2,
        _ => 1,
    }
}

impl From<SelError> for Failure {
    fn from(e: SelError) -> Self {
        let message = match e {
            SelError::BorderlineRegime { .. } => {
                format!("{e}; alpha+beta=1 is excluded (pass --allow-borderline for alpha < 1)")
            }
            _ => e.to_string(),
        };
        Self { code: exit_code(&e), message }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::invalid(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::invalid(format!("json: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self::invalid(format!("csv: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => commands::run_solve(&a),
        Command::Sweep(a) => commands::run_sweep(&a),
        Command::Spectrum(a) => commands::run_spectrum(&a),
        Command::Regularity(a) => commands::run_regularity(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

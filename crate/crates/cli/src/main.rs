//! `hmin`: experiments on Heisenberg minimal graphs from the command line.
//!
//! Exit codes: 0 success, 2 input or precondition error, 3 verification or
//! certification failure, 4 solver divergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heisenberg_minimal::ode::Sign;

mod commands;
mod output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Verification(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }
}

impl From<heisenberg_minimal::Error> for CliError {
    fn from(e: heisenberg_minimal::Error) -> Self {
        match e {
            heisenberg_minimal::Error::NewtonDivergence { .. } | heisenberg_minimal::Error::LinearSolve(_) => {
                CliError::Divergence(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hmin", version, about = "Minimal graphs in the Heisenberg group")]
pub struct Cli {
    /// Directory for reports and data files.
    #[arg(long, global = true, default_value = "hmin-out")]
    pub out_dir: PathBuf,
    /// Grid spacing.
    #[arg(long, global = true)]
    pub h: Option<f64>,
    /// Reserved; every command is deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print the main report as JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Residual convergence study for a closed-form family.
    Verify(VerifyArgs),
    /// Dirichlet problem by continuation in lambda.
    Solve(SolveArgs),
    /// Energies of the two surfaces sharing the unit-circle boundary curve.
    Nonunique,
    /// Surface with a prescribed Gauss map, by characteristics.
    Characteristics(CharArgs),
    /// Corkscrew profile ODE against its closed form.
    Cork(CorkArgs),
    /// Energies of a surface file or a family sample.
    Energy(EnergyArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Example spec (JSON with `family`, `params`, optional `g` and `domain`).
    pub spec: PathBuf,
    /// Grid spacings, comma separated (default: h, h/2, h/4).
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Boundary spec (JSON, `kind` = example | trace | samples).
    #[arg(long)]
    pub boundary: PathBuf,
    /// Region (JSON); defaults to the example's region or the unit disk.
    #[arg(long)]
    pub domain: Option<PathBuf>,
    /// Solver configuration (JSON); unspecified fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CharArgs {
    /// Vector field spec (JSON, `kind` = constant | rotational | plane | custom).
    #[arg(long)]
    pub field: PathBuf,
    /// Initial curve spec (JSON, `kind` = vertical_line | circle | segment | polyline).
    #[arg(long)]
    pub curve: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub s_min: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub s_max: f64,
    /// Region (JSON) to resample on; defaults to the curves' bounding box.
    #[arg(long)]
    pub domain: Option<PathBuf>,
    /// Example spec whose closed form the reconstruction is compared with.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    pub compare_tol: f64,
}

#[derive(Debug, Args)]
pub struct CorkArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long)]
    pub b: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub c: f64,
    #[arg(long, default_value = "+", value_parser = parse_sign)]
    pub sign: Sign,
    /// Start radius (default: max(sqrt 2, 1.05 r_min)).
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    pub r_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    /// Fail (exit 3) when the max error exceeds this.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// Grid CSV of the surface.
    #[arg(long, conflicts_with = "example")]
    pub surface: Option<PathBuf>,
    /// Node-kind mask CSV for `--surface`.
    #[arg(long, requires = "surface")]
    pub mask: Option<PathBuf>,
    /// Example spec to sample at `--h`.
    #[arg(long)]
    pub example: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 10.0, 100.0])]
    pub lambda: Vec<f64>,
}

fn parse_sign(s: &str) -> Result<Sign, String> {
    match s {
        "+" | "plus" => Ok(Sign::Plus),
        "-" | "minus" => Ok(Sign::Minus),
        _ => Err(format!("expected + or -, got {s}")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hmin: {e}");
            ExitCode::from(e.code())
        }
    }
}

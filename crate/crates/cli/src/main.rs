//! `advreg`: adversarial reward perturbations of regularized policies.

#![allow(clippy::needless_range_loop)]

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod commands;
mod config;
mod output;
mod verify;

use config::{CliError, Result};
use output::{Format, Report};

#[derive(Debug, Parser)]
#[command(name = "advreg", version, about = "Worst-case reward perturbations for regularized policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal policy and worst-case perturbation for a single-step reward vector.
    Perturb(PerturbArgs),
    /// Trace the two-action robust-set boundary and mark the worst case.
    RobustBoundary(BoundaryArgs),
    /// Soft value, normalizers and the psi relationship over alpha x beta.
    ValueSweep(SweepArgs),
    /// Solve a gridworld and report perturbations and path-consistency residuals.
    Gridworld(GridArgs),
    /// Run the randomized invariant suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RegArgs {
    /// Divergence order; 1 is KL.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Inverse regularization strength.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Reference policy: uniform, list:<p1,p2,...> or csv:<path>.
    #[arg(long = "ref", default_value = "uniform")]
    #[serde(rename = "ref")]
    pub reference: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PerturbArgs {
    /// Comma-separated action values.
    #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub q: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub reg: RegArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundaryArgs {
    /// Two comma-separated action values.
    #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub q: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub reg: RegArgs,
    /// Lower end of the Δr(a1) grid (default -3/beta).
    #[arg(long, allow_negative_numbers = true)]
    pub dr_min: Option<f64>,
    /// Upper end of the Δr(a1) grid (default 1/beta).
    #[arg(long, allow_negative_numbers = true)]
    pub dr_max: Option<f64>,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
    /// Also emit the Shannon-entropy boundary shifted by (1/beta) ln 2.
    #[arg(long)]
    pub entropy_overlay: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub q: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0.5,1,2,3")]
    pub alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,1,2,5,10,100,1000")]
    pub betas: Vec<f64>,
    #[arg(long = "ref", default_value = "uniform")]
    #[serde(rename = "ref")]
    pub reference: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    /// Gridworld text file (`.` floor, `#` wall, `W` water, `G` goal). The
    /// bundled layout is used when omitted.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub reg: RegArgs,
    #[arg(long, default_value_t = 0.99)]
    pub gamma: f64,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub water_reward: f64,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    pub goal_reward: f64,
    /// Sup-norm stopping tolerance for value iteration.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iters: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Random cases per invariant.
    #[arg(long, default_value_t = 200)]
    pub cases: usize,
    /// Scale every normalizer by 1 + 1e-3 before checking (fault injection).
    #[arg(long, hide = true)]
    pub fault_psi: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

/// A report plus whether its invariants held.
pub struct Outcome {
    pub report: Report,
    pub ok: bool,
}

fn run(command: Command) -> Result<Outcome> {
    let (outcome, output) = match command {
        Command::Perturb(a) => (commands::perturb(&a)?, a.output),
        Command::RobustBoundary(a) => (commands::robust_boundary(&a)?, a.output),
        Command::ValueSweep(a) => (commands::value_sweep(&a)?, a.output),
        Command::Gridworld(a) => (commands::gridworld(&a)?, a.output),
        Command::Verify(a) => (verify::run(&a)?, a.output),
    };
    let text = outcome.report.render(output.format);
    match &output.out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })?;
        }
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(outcome) if outcome.ok => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("error: invariant check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! The `amid` command-line interface.
//!
//! Subcommands: `mixture`, `divergence`, `grad-check`, `fit-simplex`, `toy`,
//! `sweep`, `distill`. Each reads an optional JSON config (`--config`, unknown
//! keys rejected) and lets flags override it. Outputs embed the resolved
//! config. Floats are written with 17 significant digits and CSV files start
//! with a versioned schema line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 bad configuration,
//! 3 numerical failure. `AMID_LOG_LEVEL` selects `error`, `info` or `debug`.

mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    VerificationFailure = 1,
    BadConfig = 2,
    NumericalFailure = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// A failure together with the exit status it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub status: ExitStatus,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { status: ExitStatus::BadConfig, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::EmptySupport
            | Error::SupportViolation { .. }
            | Error::IndeterminateWeight { .. }
            | Error::NonFiniteLoss
            | Error::DivergedLoss { .. } => ExitStatus::NumericalFailure,
            _ => ExitStatus::BadConfig,
        };
        Self { status, message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "amid", version, about = "Alpha-mixture assistant distributions and AMiD distillation")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the alpha-mixture of two categoricals.
    Mixture(MixtureArgs),
    /// Evaluate a divergence between two categoricals.
    Divergence(DivergenceArgs),
    /// Compare analytic and finite-difference gradients on a seeded suite.
    GradCheck(GradCheckArgs),
    /// Fit a softmax student to a teacher with the AMiD loss.
    FitSimplex(FitSimplexArgs),
    /// Fit a Gaussian to a two-mode mixture through the assistant.
    Toy(ToyArgs),
    /// Run a grid of simplex fits.
    Sweep(SweepArgs),
    /// Distill between tabular sequence models.
    Distill(DistillArgs),
}

#[derive(Debug, Args)]
struct IoArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path; companion JSON goes next to it. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Debug, Args)]
struct PairArgs {
    /// Comma-separated probabilities (or logits with --logits).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    p: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    q: Option<Vec<f64>>,
    /// Read p and q as logits.
    #[arg(long)]
    logits: bool,
}

#[derive(Debug, Args)]
struct MixtureArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Debug, Args)]
struct DivergenceArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    pair: PairArgs,
    /// kl | rkl | jeffreys | skl[:l] | srkl[:l] | gjs[:l] | alpha:<a> | ab:<a>,<b>
    #[arg(long, allow_hyphen_values = true)]
    divergence: Option<String>,
}

#[derive(Debug, Args)]
struct GradCheckArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Run only the lambda = 1 controls.
    #[arg(long)]
    lambda_one_only: bool,
    /// Flip the analytic gradient (checks that the checker can fail).
    #[arg(long)]
    negate_analytic: bool,
}

#[derive(Debug, Args)]
struct FitSimplexArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Teacher probabilities; a Dirichlet(1) draw from --seed when omitted.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    teacher_zeros: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    divergence: Option<String>,
    /// teacher | student
    #[arg(long)]
    direction: Option<String>,
}

#[derive(Debug, Args)]
struct ToyArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Comma-separated alphas.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    alpha: Option<Vec<f64>>,
    /// Comma-separated lambdas.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// Repeat for several divergences.
    #[arg(long, allow_hyphen_values = true)]
    divergence: Vec<String>,
    /// Comma-separated directions.
    #[arg(long, value_delimiter = ',')]
    direction: Option<Vec<String>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    teachers: Option<usize>,
    #[arg(long)]
    teacher_zeros: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DistillArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// fixed | on-policy | mixed | adaptive-off-policy
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    mix_prob: Option<f64>,
    #[arg(long)]
    buffer_size: Option<usize>,
    #[arg(long)]
    refresh_interval: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// kl | rkl | jeffreys
    #[arg(long)]
    divergence: Option<String>,
    #[arg(long)]
    direction: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    teacher_seed: Option<u64>,
    #[arg(long)]
    batch: Option<usize>,
    /// uniform | teacher
    #[arg(long)]
    student_init: Option<String>,
}

fn init_logging() -> Result<(), CliError> {
    let level = std::env::var("AMID_LOG_LEVEL").unwrap_or_else(|_| "error".into());
    let filter = match level.as_str() {
        "error" => log::LevelFilter::Error,
        "info" => log::LevelFilter::Info,
        "debug" => log::LevelFilter::Debug,
        other => return Err(CliError::config(format!("AMID_LOG_LEVEL must be error, info or debug, got {other:?}"))),
    };
    // A second initialization within one process is harmless.
    let _ = env_logger::Builder::new().filter_level(filter).try_init();
    Ok(())
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitStatus::BadConfig.code() } else { ExitStatus::Success.code() };
        }
    };
    let outcome = init_logging().and_then(|()| dispatch(cli.command));
    match outcome {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("amid: {e}");
            e.status.code()
        }
    }
}

fn dispatch(command: Command) -> Result<ExitStatus, CliError> {
    match command {
        Command::Mixture(a) => commands::mixture(a),
        Command::Divergence(a) => commands::divergence(a),
        Command::GradCheck(a) => commands::grad_check(a),
        Command::FitSimplex(a) => commands::fit_simplex(a),
        Command::Toy(a) => commands::toy(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Distill(a) => commands::distill(a),
    }
}

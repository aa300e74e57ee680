//! `andor`: train small classifiers, decompose their outputs into sparse
//! AND-OR interactions, and track those interactions across checkpoints.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod commands;
mod config;

#[derive(Parser, Debug)]
#[command(name = "andor", version, about, propagate_version = true)]
pub struct Cli {
    /// Flat `key = value` file of defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for analysis (default: available cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a classifier with mini-batch SGD, writing periodic checkpoints.
    Train(TrainArgs),
    /// Generate a planted AND-OR task: train.csv, test.csv and truth.json.
    Synth(SynthArgs),
    /// Decompose a checkpoint's outputs on selected samples.
    Extract(ExtractArgs),
    /// Score salient interactions by transfer to a baseline model.
    Match(MatchArgs),
    /// Track interaction metrics and the loss gap across checkpoints.
    Sweep(SweepArgs),
    /// Run the built-in invariant checks.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// Training data (CSV: x1..xn,label).
    #[arg(long)]
    pub data: PathBuf,
    /// Layer widths, input first and classes last, e.g. `8,32,32,2`.
    #[arg(long)]
    pub arch: String,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint period in epochs (0: only the first and last).
    #[arg(long, default_value_t = 10)]
    pub ckpt_every: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// `relu` or `tanh`.
    #[arg(long, default_value = "relu")]
    pub activation: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Number of planted terms.
    #[arg(long, default_value_t = 5)]
    pub planted: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub num_train: usize,
    #[arg(long, default_value_t = 1000)]
    pub num_test: usize,
    /// Standard deviation of Gaussian noise added to the score before labeling.
    #[arg(long, default_value_t = 0.0)]
    pub noise_std: f64,
    /// Kinds to plant: `and`, `or` or `and,or`.
    #[arg(long, default_value = "and,or")]
    pub kinds: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Samples to analyze are drawn from this file.
    #[arg(long)]
    pub data: PathBuf,
    /// Per-coordinate means of this file are the masking baseline (default: --data).
    #[arg(long)]
    pub baseline_data: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    /// Seeds the choice of samples.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5000)]
    pub sparsify_iters: usize,
    /// Relative salience threshold.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct MatchArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub base_ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub baseline_data: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5000)]
    pub sparsify_iters: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    /// Directory of `ckpt_*.json` files.
    #[arg(long)]
    pub ckpt_dir: PathBuf,
    #[arg(long)]
    pub base_ckpt: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5000)]
    pub sparsify_iters: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5000)]
    pub sparsify_iters: usize,
    /// Optional directory for verify.json and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failures, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or inputs, detected before any work starts.
    Validation(String),
    /// Anything that goes wrong while working.
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Validation(_) => ExitCode::from(1),
            Failure::Runtime(_) => ExitCode::from(2),
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<OsString> = std::env::args_os().collect();
    let (argv, config_path) = match config::apply(argv.clone()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let ctx = commands::Context {
        argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        config: config_path,
        jobs: match resolve_jobs(cli.jobs) {
            Ok(j) => j,
            Err(f) => {
                eprintln!("error: {}", f.message());
                return f.exit_code();
            }
        },
    };
    match run_with_jobs(&ctx, cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.exit_code()
        }
    }
}

fn resolve_jobs(jobs: Option<usize>) -> Result<usize, Failure> {
    match jobs {
        Some(0) => Err(Failure::Validation("--jobs must be at least 1".into())),
        Some(j) => Ok(j),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[cfg(feature = "parallel")]
fn run_with_jobs(ctx: &commands::Context, command: Command) -> Result<ExitCode, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs)
        .build()
        .map_err(|e| Failure::Runtime(format!("cannot start worker pool: {e}")))?;
    pool.install(|| commands::run(ctx, command))
}

#[cfg(not(feature = "parallel"))]
fn run_with_jobs(ctx: &commands::Context, command: Command) -> Result<ExitCode, Failure> {
    if ctx.jobs > 1 {
        log::warn!("built without parallel support; --jobs {} runs sequentially", ctx.jobs);
    }
    commands::run(ctx, command)
}

//! Command-line driver: complexity estimates and bounds, training,
//! evaluation, (s, C) sweeps and synthetic data.
//!
//! Exit codes: 0 ok, 1 numeric failure, 2 usage or config error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod config;
pub mod dataset;
pub mod erc;
pub mod error;
pub mod output;
pub mod sweep;
pub mod synth;
pub mod train;

use config::{Config, SynthConfig};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "lpmtl", version, about = "lp-norm multi-task kernel machines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Task CSV (`task_id,label,f1..fd`) or JSON manifest.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Subsample every task to the smallest task size.
    #[arg(long)]
    pub subsample_to_min: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo complexity estimates over an s grid.
    ErcEstimate {
        #[command(flatten)]
        common: Common,
        /// Rademacher samples D.
        #[arg(long)]
        samples: Option<usize>,
        /// CSV, or JSON when the name ends in `.json` (default: stdout CSV).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Long-format `s,sample,value` CSV of the per-sample values.
        #[arg(long)]
        per_sample: Option<PathBuf>,
    },
    /// Closed-form complexity bounds over an s grid.
    ErcBound {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Task count, when no dataset is given.
        #[arg(long)]
        tasks: Option<usize>,
        /// Samples per task, when no dataset is given.
        #[arg(long)]
        per_task: Option<usize>,
        /// Kernel count M (defaults to the config's kernel list).
        #[arg(long)]
        kernels: Option<usize>,
    },
    /// Train a model and write it as JSON.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        split: train::SplitSide,
    },
    /// Per-task and mean accuracy of a saved model.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        split: train::SplitSide,
    },
    /// Accuracy over the (s, C) grid with resampled splits.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Best-C-per-s table (default: `<out>.summary.csv`).
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Skip cells already completed in `--out`.
        #[arg(long)]
        resume: bool,
        /// Fill the wall_time column (makes output run-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Write a synthetic multi-task CSV.
    Synth {
        #[arg(long)]
        tasks: usize,
        #[arg(long)]
        per_task: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        relatedness: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

impl Command {
    fn workers(&self) -> Option<usize> {
        match self {
            Command::ErcEstimate { common, .. }
            | Command::ErcBound { common, .. }
            | Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Sweep { common, .. } => common.workers,
            Command::Synth { workers, .. } => *workers,
        }
    }
}

/// Runs a parsed command on a pool of the requested size.
pub fn run(cli: Cli) -> CliResult<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    match cli.command.workers() {
        Some(0) => return Err(CliError::usage("--workers must be >= 1")),
        Some(n) => builder = builder.num_threads(n),
        None => {}
    }
    let pool = builder.build().map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command))
}

fn erc_args(common: &Common, samples: Option<usize>, out: Option<PathBuf>, per_sample: Option<PathBuf>) -> CliResult<erc::ErcArgs> {
    Ok(erc::ErcArgs {
        dataset: common.dataset.clone(),
        config: Config::load(common.config.as_deref())?,
        seed: common.seed,
        samples,
        out,
        per_sample,
        subsample_to_min: common.subsample_to_min,
    })
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::ErcEstimate { common, samples, out, per_sample } => {
            if samples == Some(0) {
                return Err(CliError::usage("--samples must be >= 1"));
            }
            erc::run_estimate(&erc_args(&common, samples, out, per_sample)?)
        }
        Command::ErcBound { common, out, tasks, per_task, kernels } => {
            let erc = erc_args(&common, None, out, None)?;
            erc::run_bound(&erc::BoundArgs { erc, tasks, per_task, kernels })
        }
        Command::Train { common, out, split } => train::run_train(&train::TrainArgs {
            dataset: common.dataset,
            config: Config::load(common.config.as_deref())?,
            seed: common.seed,
            out,
            subsample_to_min: common.subsample_to_min,
            split,
        }),
        Command::Eval { common, model, out, split } => train::run_eval(&train::EvalArgs {
            dataset: common.dataset,
            config: Config::load(common.config.as_deref())?,
            seed: common.seed,
            model,
            out,
            subsample_to_min: common.subsample_to_min,
            split,
        }),
        Command::Sweep { common, out, summary, resume, timing } => sweep::run(&sweep::SweepArgs {
            dataset: common.dataset,
            config: Config::load(common.config.as_deref())?,
            seed: common.seed,
            out,
            summary,
            subsample_to_min: common.subsample_to_min,
            resume,
            timing,
        }),
        Command::Synth { tasks, per_task, dim, relatedness, noise, seed, out, .. } => synth::run(&synth::SynthArgs {
            params: SynthConfig { tasks, per_task, dim, relatedness, noise },
            seed,
            out,
        }),
    }
}

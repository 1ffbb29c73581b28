//! `train` and `eval`.

use std::path::PathBuf;

use clap::ValueEnum;
use lpmtl::{split, train_mkl, train_mtl, AnyModel64, Dataset, Exponent, Predictor};
use serde::Serialize;

use crate::config::Config;
use crate::dataset;
use crate::error::{CliError, CliResult};
use crate::output::{csv_bytes, emit, json_bytes, num, Format};

/// Which side of the seeded stratified split a command sees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum SplitSide {
    #[default]
    All,
    Train,
    Test,
}

pub struct TrainArgs {
    pub dataset: Option<PathBuf>,
    pub config: Config,
    pub seed: u64,
    pub out: PathBuf,
    pub subsample_to_min: bool,
    pub split: SplitSide,
}

pub struct EvalArgs {
    pub dataset: Option<PathBuf>,
    pub config: Config,
    pub seed: u64,
    pub model: PathBuf,
    pub out: Option<PathBuf>,
    pub subsample_to_min: bool,
    pub split: SplitSide,
}

pub fn select(data: Dataset, side: SplitSide, cfg: &Config, seed: u64) -> CliResult<Dataset> {
    if side == SplitSide::All {
        return Ok(data);
    }
    let (train, test) = split(&data, cfg.train_fraction()?, seed)?;
    Ok(if side == SplitSide::Train { train } else { test })
}

/// Fixed-kernel training unless `r` is set or several kernels are listed.
pub fn fit(data: &Dataset, cfg: &Config, s: Exponent, c: f64) -> CliResult<AnyModel64> {
    let kernels = cfg.kernels()?;
    let opts = cfg.train_options()?;
    if cfg.r.is_some() || kernels.len() > 1 {
        let r = cfg.r.unwrap_or(Exponent::ONE);
        Ok(AnyModel64::Mkl(train_mkl(data, &kernels, s, r, c, &opts)?))
    } else {
        Ok(AnyModel64::Mtl(train_mtl(data, &kernels[0], s, c, &opts)?))
    }
}

pub fn run_train(args: &TrainArgs) -> CliResult<()> {
    let cfg = &args.config;
    let s = cfg.s.unwrap_or(Exponent::TWO);
    let c = cfg.c()?;
    let data = dataset::load(args.dataset.as_deref(), cfg, args.subsample_to_min, args.seed)?;
    let data = select(data, args.split, cfg, args.seed)?;
    let model = fit(&data, cfg, s, c)?;
    let diag = match &model {
        AnyModel64::Mtl(m) => &m.diagnostics,
        AnyModel64::Mkl(m) => &m.diagnostics,
    };
    if !diag.converged {
        log::warn!("outer loop stopped after {} iterations without converging", diag.outer_iterations);
    }
    let mut bytes = Vec::new();
    model.to_writer(&mut bytes)?;
    bytes.push(b'\n');
    emit(Some(&args.out), &bytes)
}

#[derive(Debug, Serialize)]
pub struct TaskAccuracy {
    pub task: String,
    pub accuracy: f64,
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub tasks: Vec<TaskAccuracy>,
    pub mean_accuracy: f64,
}

pub fn evaluate(model: &AnyModel64, data: &Dataset) -> CliResult<EvalReport> {
    let acc = model.task_accuracies(data)?;
    let mean = model.mean_accuracy(data)?;
    let tasks = data.tasks.iter().zip(acc).map(|(t, a)| TaskAccuracy { task: t.name.clone(), accuracy: a }).collect();
    Ok(EvalReport { tasks, mean_accuracy: mean })
}

pub fn run_eval(args: &EvalArgs) -> CliResult<()> {
    let model = AnyModel64::load(&args.model)
        .map_err(|e| CliError::usage(format!("model {}: {e}", args.model.display())))?;
    let cfg = &args.config;
    let data = dataset::load(args.dataset.as_deref(), cfg, args.subsample_to_min, args.seed)?;
    let data = select(data, args.split, cfg, args.seed)?;
    let report = evaluate(&model, &data)?;
    let body = match Format::for_path(args.out.as_deref(), Format::Json) {
        Format::Json => json_bytes(&report)?,
        Format::Csv => {
            let mut rows: Vec<Vec<String>> = report.tasks.iter().map(|t| vec![t.task.clone(), num(t.accuracy)]).collect();
            rows.push(vec!["mean".into(), num(report.mean_accuracy)]);
            csv_bytes(&["task", "accuracy"], &rows)?
        }
    };
    emit(args.out.as_deref(), &body)
}

//! `erc-estimate` and `erc-bound`.

use std::path::PathBuf;

use lpmtl::kernels::check_bound_assumption;
use lpmtl::rademacher::{erc_multi_kernel_grid, erc_single_kernel_grid, BoundBranch, BoundStatus};
use lpmtl::{build_gram, erc_bound, ErcParams, ErcReport, Exponent, KernelSpec};
use serde::Serialize;

use crate::config::{Config, DEFAULT_SAMPLES};
use crate::dataset;
use crate::error::{CliError, CliResult};
use crate::output::{csv_bytes, emit, json_bytes, num, opt_num, Format};

pub struct ErcArgs {
    pub dataset: Option<PathBuf>,
    pub config: Config,
    pub seed: u64,
    pub samples: Option<usize>,
    pub out: Option<PathBuf>,
    pub per_sample: Option<PathBuf>,
    pub subsample_to_min: bool,
}

const ESTIMATE_HEADER: [&str; 15] =
    ["s", "r", "estimate", "std_error", "bound", "branch", "tau", "rho", "T", "N", "M", "D", "seed", "excluded_samples", "bound_value"];

fn branch_name(b: Option<BoundBranch>) -> String {
    match b {
        None => String::new(),
        Some(b) => serde_json::to_value(b).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
    }
}

fn opt_exp(r: Option<Exponent>) -> String {
    r.map(|e| e.to_string()).unwrap_or_default()
}

/// Bound-path kernels default to unit-diagonal normalisation.
fn bound_kernels(cfg: &Config) -> CliResult<Vec<KernelSpec>> {
    let ks: Vec<KernelSpec> = cfg.kernels()?.into_iter().map(|k| k.resolved(true)).collect();
    if cfg.r.is_none() && ks.len() != 1 {
        return Err(CliError::usage(format!("{} kernels given without r; set r to learn kernel weights", ks.len())));
    }
    Ok(ks)
}

pub fn estimate_reports(args: &ErcArgs) -> CliResult<Vec<ErcReport>> {
    let cfg = &args.config;
    let kernels = bound_kernels(cfg)?;
    let grid = cfg.erc_s_grid()?;
    let samples = args.samples.or(cfg.samples).unwrap_or(DEFAULT_SAMPLES);
    let data = dataset::load(args.dataset.as_deref(), cfg, args.subsample_to_min, args.seed)?;
    let g = build_gram(&data, &kernels)?;
    let mut params = ErcParams::single(grid[0], samples, args.seed);
    params.radius = cfg.radius();
    params.r = cfg.r;
    params.validate()?;
    let reports = match cfg.r {
        None => erc_single_kernel_grid(&g, &grid, &params)?,
        Some(_) => erc_multi_kernel_grid(&g, &grid, &params)?,
    };
    Ok(reports)
}

pub fn run_estimate(args: &ErcArgs) -> CliResult<()> {
    let reports = estimate_reports(args)?;
    let body = match Format::for_path(args.out.as_deref(), Format::Csv) {
        Format::Json => json_bytes(&reports)?,
        Format::Csv => {
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| {
                    vec![
                        r.s.to_string(),
                        opt_exp(r.r),
                        num(r.estimate),
                        num(r.std_error),
                        r.bound.as_text(),
                        branch_name(r.branch),
                        opt_num(r.tau),
                        opt_num(r.rho),
                        r.tasks.to_string(),
                        r.per_task.to_string(),
                        r.kernels.to_string(),
                        r.samples.to_string(),
                        r.seed.to_string(),
                        r.excluded_samples.to_string(),
                        opt_num(r.bound_value),
                    ]
                })
                .collect();
            csv_bytes(&ESTIMATE_HEADER, &rows)?
        }
    };
    let per_sample = match &args.per_sample {
        Some(_) => {
            let mut rows = Vec::new();
            for r in &reports {
                for (i, v) in r.per_sample.iter().enumerate() {
                    rows.push(vec![r.s.to_string(), i.to_string(), num(*v)]);
                }
            }
            Some(csv_bytes(&["s", "sample", "value"], &rows)?)
        }
        None => None,
    };
    emit(args.out.as_deref(), &body)?;
    if let (Some(p), Some(bytes)) = (&args.per_sample, per_sample) {
        emit(Some(p), &bytes)?;
    }
    Ok(())
}

pub struct BoundArgs {
    pub erc: ErcArgs,
    pub tasks: Option<usize>,
    pub per_task: Option<usize>,
    pub kernels: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct BoundRow {
    pub s: Exponent,
    pub r: Option<Exponent>,
    pub bound: BoundStatus,
    pub bound_value: Option<f64>,
    pub branch: Option<BoundBranch>,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    #[serde(rename = "T")]
    pub tasks: usize,
    #[serde(rename = "N")]
    pub per_task: usize,
    #[serde(rename = "M")]
    pub kernels: usize,
    #[serde(rename = "R")]
    pub radius: f64,
}

/// Closed-form bounds only. Sizes come from the dataset when one is given
/// (which also checks `k(x,x) ≤ 1`), otherwise from `--tasks/--per-task`.
pub fn bound_rows(args: &BoundArgs) -> CliResult<Vec<BoundRow>> {
    let cfg = &args.erc.config;
    let grid = cfg.erc_s_grid()?;
    let have_data = args.erc.dataset.is_some() || cfg.synth.is_some();
    let (t, n, m, assumption) = if have_data {
        let kernels = bound_kernels(cfg)?;
        let data = dataset::load(args.erc.dataset.as_deref(), cfg, args.erc.subsample_to_min, args.erc.seed)?;
        let g = build_gram(&data, &kernels)?;
        let n = g
            .equal_task_size()
            .ok_or_else(|| CliError::usage("bounds need equal task sizes; pass --subsample-to-min"))?;
        (g.num_tasks(), n, g.num_kernels(), check_bound_assumption(&g))
    } else {
        let (Some(t), Some(n)) = (args.tasks, args.per_task) else {
            return Err(CliError::usage("erc-bound needs --dataset, a synth config, or --tasks and --per-task"));
        };
        let m = args.kernels.unwrap_or_else(|| cfg.kernels.as_ref().map_or(1, Vec::len));
        (t, n, m, true)
    };
    if cfg.r.is_none() && m != 1 {
        return Err(CliError::usage(format!("{m} kernels given without r")));
    }
    grid.iter()
        .map(|&s| {
            let p = ErcParams { s, r: cfg.r, radius: cfg.radius(), num_samples: 1, seed: args.erc.seed };
            p.validate()?;
            let row = match erc_bound(t, n, m, &p, assumption) {
                Ok(b) => BoundRow {
                    s,
                    r: cfg.r,
                    bound: if b.assumption_ok { BoundStatus::Valid(b.value) } else { BoundStatus::AssumptionViolated },
                    bound_value: Some(b.value),
                    branch: Some(b.branch),
                    tau: Some(b.tau),
                    rho: b.rho,
                    tasks: t,
                    per_task: n,
                    kernels: m,
                    radius: p.radius,
                },
                Err(lpmtl::Error::InvalidParameter(msg)) if t > 0 && n > 0 && m > 0 => {
                    log::warn!("s = {s}: {msg}");
                    BoundRow {
                        s,
                        r: cfg.r,
                        bound: BoundStatus::Unavailable,
                        bound_value: None,
                        branch: None,
                        tau: None,
                        rho: None,
                        tasks: t,
                        per_task: n,
                        kernels: m,
                        radius: p.radius,
                    }
                }
                Err(e) => return Err(e.into()),
            };
            Ok(row)
        })
        .collect()
}

pub fn run_bound(args: &BoundArgs) -> CliResult<()> {
    let rows = bound_rows(args)?;
    let body = match Format::for_path(args.erc.out.as_deref(), Format::Json) {
        Format::Json => json_bytes(&rows)?,
        Format::Csv => {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|b| {
                    vec![
                        b.s.to_string(),
                        opt_exp(b.r),
                        b.bound.as_text(),
                        branch_name(b.branch),
                        opt_num(b.tau),
                        opt_num(b.rho),
                        b.tasks.to_string(),
                        b.per_task.to_string(),
                        b.kernels.to_string(),
                        num(b.radius),
                        opt_num(b.bound_value),
                    ]
                })
                .collect();
            csv_bytes(&["s", "r", "bound", "branch", "tau", "rho", "T", "N", "M", "R", "bound_value"], &table)?
        }
    };
    emit(args.erc.out.as_deref(), &body)
}

//! `sweep`: accuracy over an (s, C) grid with resampled train/test splits.
//!
//! Cells run on the rayon pool in chunks; after each chunk the result file
//! is rewritten in grid order, so an interrupted sweep resumes from the
//! completed cells and the final bytes do not depend on the worker count.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lpmtl::{split, Dataset, Exponent, KernelKind, KernelSpec, Predictor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::dataset;
use crate::error::{CliError, CliResult};
use crate::output::{csv_bytes, emit, num, opt_num};
use crate::train::fit;

const CHUNK: usize = 32;
pub const STATUS_OK: &str = "ok";

pub const ROW_HEADER: [&str; 9] = ["s", "r", "C", "kernel", "repeat", "mean_task_accuracy", "objective", "wall_time", "status"];
pub const SUMMARY_HEADER: [&str; 6] = ["s", "r", "kernel", "best_C", "mean_task_accuracy", "repeats"];

/// One (s, C, kernel, repeat) cell. Text fields hold the exact strings
/// written to the CSV, which is also the resumption key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub s: String,
    pub r: String,
    #[serde(rename = "C")]
    pub c: String,
    pub kernel: String,
    pub repeat: usize,
    pub mean_task_accuracy: Option<f64>,
    pub objective: Option<f64>,
    pub wall_time: Option<f64>,
    pub status: String,
}

impl SweepRow {
    fn key(&self) -> (String, String, String, String, usize) {
        (self.s.clone(), self.r.clone(), self.c.clone(), self.kernel.clone(), self.repeat)
    }

    fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }
}

/// Best C per (s, kernel) by accuracy averaged over repeats; ties keep the
/// earlier grid value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub s: String,
    pub r: String,
    pub kernel: String,
    #[serde(rename = "best_C")]
    pub best_c: Option<String>,
    pub mean_task_accuracy: Option<f64>,
    /// Successful repeats behind the reported mean.
    pub repeats: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
}

/// A resolved sweep grid.
#[derive(Clone, Debug)]
pub struct SweepPlan {
    pub s_grid: Vec<Exponent>,
    pub c_grid: Vec<f64>,
    pub r: Exponent,
    /// Each entry is trained as one model: a single kernel, or the joint set.
    pub kernel_sets: Vec<Vec<KernelSpec>>,
    pub repeats: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl SweepPlan {
    pub fn from_config(cfg: &Config, seed: u64) -> CliResult<Self> {
        let kernels = cfg.kernels()?;
        let kernel_sets = if cfg.mkl.unwrap_or(false) { vec![kernels] } else { kernels.into_iter().map(|k| vec![k]).collect() };
        Ok(Self {
            s_grid: cfg.sweep_s_grid()?,
            c_grid: cfg.c_grid()?,
            r: cfg.r.unwrap_or(Exponent::ONE),
            kernel_sets,
            repeats: cfg.repeats()?,
            train_fraction: cfg.train_fraction()?,
            seed,
        })
    }

    fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for (k, _) in self.kernel_sets.iter().enumerate() {
            for (si, _) in self.s_grid.iter().enumerate() {
                for (ci, _) in self.c_grid.iter().enumerate() {
                    for repeat in 0..self.repeats {
                        out.push(Cell { kernel: k, s: si, c: ci, repeat });
                    }
                }
            }
        }
        out
    }

    fn blank_row(&self, cell: &Cell) -> SweepRow {
        SweepRow {
            s: self.s_grid[cell.s].to_string(),
            r: self.r.to_string(),
            c: num(self.c_grid[cell.c]),
            kernel: kernel_set_label(&self.kernel_sets[cell.kernel]),
            repeat: cell.repeat,
            mean_task_accuracy: None,
            objective: None,
            wall_time: None,
            status: String::new(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    kernel: usize,
    s: usize,
    c: usize,
    repeat: usize,
}

pub fn kernel_label(k: &KernelSpec) -> String {
    let base = match k.kind {
        KernelKind::Gaussian { spread } => format!("gaussian:{}", num(spread)),
        KernelKind::Linear => "linear".into(),
        KernelKind::Polynomial { degree } => format!("poly:{degree}"),
    };
    match k.normalize {
        Some(true) => format!("{base}:norm"),
        _ => base,
    }
}

pub fn kernel_set_label(ks: &[KernelSpec]) -> String {
    ks.iter().map(kernel_label).collect::<Vec<_>>().join("+")
}

/// Split seed of one repeat.
pub fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    seed ^ (repeat as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn run_cell(plan: &SweepPlan, cfg: &Config, splits: &[(Dataset, Dataset)], cell: &Cell, timing: bool) -> SweepRow {
    let mut row = plan.blank_row(cell);
    let start = Instant::now();
    let (train, test) = &splits[cell.repeat];
    let mut cell_cfg = cfg.clone();
    cell_cfg.kernels = Some(plan.kernel_sets[cell.kernel].clone());
    cell_cfg.r = if plan.kernel_sets[cell.kernel].len() > 1 { Some(plan.r) } else { None };
    let outcome = fit(train, &cell_cfg, plan.s_grid[cell.s], plan.c_grid[cell.c]).and_then(|model| {
        let acc = model.mean_accuracy(test)?;
        let objective = match &model {
            lpmtl::AnyModel64::Mtl(m) => m.diagnostics.objective,
            lpmtl::AnyModel64::Mkl(m) => m.diagnostics.objective,
        };
        Ok((acc, objective))
    });
    match outcome {
        Ok((acc, obj)) => {
            row.mean_task_accuracy = Some(acc);
            row.objective = Some(obj);
            row.status = STATUS_OK.into();
        }
        Err(e) => {
            log::warn!("cell s={} C={} kernel={} repeat={} failed: {e}", row.s, row.c, row.kernel, row.repeat);
            row.status = format!("failed: {e}");
        }
    }
    if timing {
        row.wall_time = Some(start.elapsed().as_secs_f64());
    }
    row
}

/// Runs every cell not already completed in `previous`. `checkpoint` sees
/// the rows finished so far, in grid order, after each chunk.
pub fn sweep(
    data: &Dataset,
    cfg: &Config,
    plan: &SweepPlan,
    previous: &[SweepRow],
    timing: bool,
    mut checkpoint: impl FnMut(&[SweepRow]) -> CliResult<()>,
) -> CliResult<SweepResult> {
    let splits: Vec<(Dataset, Dataset)> = (0..plan.repeats)
        .map(|rep| split(data, plan.train_fraction, repeat_seed(plan.seed, rep)))
        .collect::<lpmtl::Result<_>>()?;
    let done: HashMap<_, &SweepRow> = previous.iter().filter(|r| r.is_ok()).map(|r| (r.key(), r)).collect();
    let cells = plan.cells();
    let mut rows: Vec<Option<SweepRow>> = cells
        .iter()
        .map(|c| done.get(&plan.blank_row(c).key()).map(|r| (*r).clone()))
        .collect();
    let todo: Vec<usize> = (0..cells.len()).filter(|&i| rows[i].is_none()).collect();
    if todo.len() < cells.len() {
        log::info!("resuming: {} of {} cells already complete", cells.len() - todo.len(), cells.len());
    }
    for chunk in todo.chunks(CHUNK) {
        let fresh: Vec<SweepRow> = chunk.par_iter().map(|&i| run_cell(plan, cfg, &splits, &cells[i], timing)).collect();
        for (&i, row) in chunk.iter().zip(fresh) {
            rows[i] = Some(row);
        }
        let finished: Vec<SweepRow> = rows.iter().flatten().cloned().collect();
        checkpoint(&finished)?;
    }
    let rows: Vec<SweepRow> = rows.into_iter().flatten().collect();
    let summary = summarize(plan, &rows);
    Ok(SweepResult { rows, summary })
}

pub fn summarize(plan: &SweepPlan, rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    let r = plan.r.to_string();
    for ks in &plan.kernel_sets {
        let kernel = kernel_set_label(ks);
        for s in &plan.s_grid {
            let s = s.to_string();
            let mut best: Option<(String, f64, usize)> = None;
            for &c in &plan.c_grid {
                let c = num(c);
                let accs: Vec<f64> = rows
                    .iter()
                    .filter(|row| row.is_ok() && row.s == s && row.r == r && row.c == c && row.kernel == kernel)
                    .filter_map(|row| row.mean_task_accuracy)
                    .collect();
                if accs.is_empty() {
                    continue;
                }
                let mean = accs.iter().sum::<f64>() / accs.len() as f64;
                if best.as_ref().is_none_or(|b| mean > b.1) {
                    best = Some((c, mean, accs.len()));
                }
            }
            out.push(SummaryRow {
                s,
                r: r.clone(),
                kernel: kernel.clone(),
                best_c: best.as_ref().map(|b| b.0.clone()),
                mean_task_accuracy: best.as_ref().map(|b| b.1),
                repeats: best.map_or(0, |b| b.2),
            });
        }
    }
    out
}

pub fn rows_csv(rows: &[SweepRow]) -> CliResult<Vec<u8>> {
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.s.clone(),
                r.r.clone(),
                r.c.clone(),
                r.kernel.clone(),
                r.repeat.to_string(),
                opt_num(r.mean_task_accuracy),
                opt_num(r.objective),
                opt_num(r.wall_time),
                r.status.clone(),
            ]
        })
        .collect();
    csv_bytes(&ROW_HEADER, &table)
}

pub fn summary_csv(rows: &[SummaryRow]) -> CliResult<Vec<u8>> {
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.s.clone(),
                r.r.clone(),
                r.kernel.clone(),
                r.best_c.clone().unwrap_or_default(),
                opt_num(r.mean_task_accuracy),
                r.repeats.to_string(),
            ]
        })
        .collect();
    csv_bytes(&SUMMARY_HEADER, &table)
}

/// Reads a result file written by [`rows_csv`].
pub fn read_rows(path: &Path) -> CliResult<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ROW_HEADER {
        return Err(CliError::usage(format!("{}: not a sweep result file", path.display())));
    }
    let parse = |v: &str| -> CliResult<Option<f64>> {
        if v.is_empty() {
            Ok(None)
        } else {
            v.parse().map(Some).map_err(|_| CliError::usage(format!("{}: bad number {v:?}", path.display())))
        }
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(SweepRow {
            s: rec[0].to_string(),
            r: rec[1].to_string(),
            c: rec[2].to_string(),
            kernel: rec[3].to_string(),
            repeat: rec[4].parse().map_err(|_| CliError::usage(format!("{}: bad repeat", path.display())))?,
            mean_task_accuracy: parse(&rec[5])?,
            objective: parse(&rec[6])?,
            wall_time: parse(&rec[7])?,
            status: rec[8].to_string(),
        });
    }
    Ok(rows)
}

pub struct SweepArgs {
    pub dataset: Option<PathBuf>,
    pub config: Config,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub subsample_to_min: bool,
    pub resume: bool,
    pub timing: bool,
}

/// `results.csv` → `results.summary.csv`.
pub fn default_summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sweep".into());
    out.with_file_name(format!("{stem}.summary.csv"))
}

pub fn run(args: &SweepArgs) -> CliResult<()> {
    let cfg = &args.config;
    let plan = SweepPlan::from_config(cfg, args.seed)?;
    let data = dataset::load(args.dataset.as_deref(), cfg, args.subsample_to_min, args.seed)?;
    let previous = match (&args.out, args.resume) {
        (Some(p), true) if p.exists() => read_rows(p)?,
        (None, true) => return Err(CliError::usage("--resume needs --out")),
        _ => Vec::new(),
    };
    let out = args.out.clone();
    let result = sweep(&data, cfg, &plan, &previous, args.timing, |rows| match &out {
        Some(p) => emit(Some(p), &rows_csv(rows)?),
        None => Ok(()),
    })?;
    emit(args.out.as_deref(), &rows_csv(&result.rows)?)?;
    let summary_path = args.summary.clone().or_else(|| args.out.as_deref().map(default_summary_path));
    if let Some(p) = summary_path {
        emit(Some(&p), &summary_csv(&result.summary)?)?;
    }
    let failed = result.rows.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        log::warn!("{failed} of {} cells failed", result.rows.len());
    }
    Ok(())
}

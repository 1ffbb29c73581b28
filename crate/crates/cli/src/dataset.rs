//! Dataset resolution: a task CSV, a JSON manifest pointing at one, or the
//! config's synthetic generator.

use std::path::{Path, PathBuf};

use lpmtl::{load_csv, synth_multitask, CsvSchema, Dataset};
use serde::Deserialize;

use crate::config::Config;
use crate::error::{CliError, CliResult};

/// `{path, schema, subsample_to_min, max_per_task}`; `path` is relative to
/// the manifest's directory.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    path: PathBuf,
    #[serde(default)]
    schema: CsvSchema,
    #[serde(default)]
    subsample_to_min: bool,
    #[serde(default)]
    max_per_task: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Preprocess {
    pub subsample_to_min: bool,
    pub max_per_task: Option<usize>,
}

pub fn load(path: Option<&Path>, cfg: &Config, flag_subsample: bool, seed: u64) -> CliResult<Dataset> {
    let mut pre = Preprocess {
        subsample_to_min: flag_subsample || cfg.subsample_to_min.unwrap_or(false),
        max_per_task: cfg.max_per_task,
    };
    let data = match path {
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read manifest {}: {e}", p.display())))?;
            let m: Manifest =
                serde_json::from_str(&text).map_err(|e| CliError::usage(format!("manifest {}: {e}", p.display())))?;
            pre.subsample_to_min |= m.subsample_to_min;
            pre.max_per_task = pre.max_per_task.or(m.max_per_task);
            let csv = p.parent().unwrap_or(Path::new(".")).join(&m.path);
            read_csv(&csv, &m.schema)?
        }
        Some(p) => read_csv(p, &CsvSchema::default())?,
        None => match cfg.synth {
            Some(sc) => synth_multitask(sc.tasks, sc.per_task, sc.dim, sc.relatedness, sc.noise, seed)?,
            None => return Err(CliError::usage("no --dataset given and the config has no synth section")),
        },
    };
    Ok(apply(data, pre, seed))
}

fn read_csv(path: &Path, schema: &CsvSchema) -> CliResult<Dataset> {
    load_csv(path, schema).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn apply(mut data: Dataset, pre: Preprocess, seed: u64) -> Dataset {
    if let Some(k) = pre.max_per_task {
        data = data.subsample_each(k, seed);
    }
    if pre.subsample_to_min {
        data = data.subsample_to_min(seed);
    }
    data
}

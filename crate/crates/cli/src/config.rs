//! JSON run configuration shared by all subcommands. Every field is optional;
//! unknown keys are rejected so typos surface as usage errors.

use std::path::Path;

use lpmtl::mtl::TrainOptions;
use lpmtl::{Exponent, KernelSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.1;
pub const DEFAULT_REPEATS: usize = 20;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub kernels: Option<Vec<KernelSpec>>,
    /// Exponent grid for `erc-*` and `sweep`.
    #[serde(default)]
    pub s_grid: Option<Vec<Exponent>>,
    /// Exponent for `train`.
    #[serde(default)]
    pub s: Option<Exponent>,
    /// Kernel-weight norm; setting it selects learned kernel weights.
    #[serde(default)]
    pub r: Option<Exponent>,
    #[serde(default, rename = "C")]
    pub c: Option<f64>,
    #[serde(default, rename = "C_grid")]
    pub c_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub train_fraction: Option<f64>,
    #[serde(default)]
    pub repeats: Option<usize>,
    /// Train all kernels jointly with learned weights in `sweep`, instead of
    /// sweeping them one at a time.
    #[serde(default)]
    pub mkl: Option<bool>,
    #[serde(default)]
    pub max_outer: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub subsample_to_min: Option<bool>,
    #[serde(default)]
    pub max_per_task: Option<usize>,
    /// Generate the dataset instead of reading one.
    #[serde(default)]
    pub synth: Option<SynthConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub tasks: usize,
    pub per_task: usize,
    pub dim: usize,
    #[serde(default = "one")]
    pub relatedness: f64,
    #[serde(default)]
    pub noise: f64,
}

fn one() -> f64 {
    1.0
}

impl Config {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }

    pub fn kernels(&self) -> CliResult<Vec<KernelSpec>> {
        let ks = self.kernels.clone().unwrap_or_else(|| vec![KernelSpec::gaussian(1.0)]);
        if ks.is_empty() {
            return Err(CliError::usage("config: kernels must not be empty"));
        }
        for k in &ks {
            k.validate()?;
        }
        Ok(ks)
    }

    pub fn erc_s_grid(&self) -> CliResult<Vec<Exponent>> {
        let default = if self.r.is_some() {
            vec![Exponent::TWO, Exponent::Finite(4.0), Exponent::Finite(10.0), Exponent::Finite(100.0), Exponent::Infinity]
        } else {
            vec![Exponent::ONE, Exponent::Finite(4.0 / 3.0), Exponent::TWO, Exponent::Finite(4.0), Exponent::Finite(100.0), Exponent::Infinity]
        };
        non_empty("s_grid", self.s_grid.clone().unwrap_or(default))
    }

    pub fn sweep_s_grid(&self) -> CliResult<Vec<Exponent>> {
        let default = [1.0, 4.0 / 3.0, 2.0, 4.0, 10.0, 100.0].map(Exponent::Finite).to_vec();
        non_empty("s_grid", self.s_grid.clone().unwrap_or(default))
    }

    pub fn c_grid(&self) -> CliResult<Vec<f64>> {
        let default = (-4..=4).map(|k| 3f64.powi(k)).collect();
        let grid = non_empty("C_grid", self.c_grid.clone().unwrap_or(default))?;
        for &c in &grid {
            check_c(c)?;
        }
        Ok(grid)
    }

    pub fn c(&self) -> CliResult<f64> {
        let c = self.c.unwrap_or(1.0);
        check_c(c)?;
        Ok(c)
    }

    pub fn radius(&self) -> f64 {
        self.radius.unwrap_or(1.0)
    }

    pub fn train_fraction(&self) -> CliResult<f64> {
        let f = self.train_fraction.unwrap_or(DEFAULT_TRAIN_FRACTION);
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::usage(format!("config: train_fraction {f} not in (0, 1)")));
        }
        Ok(f)
    }

    pub fn repeats(&self) -> CliResult<usize> {
        match self.repeats.unwrap_or(DEFAULT_REPEATS) {
            0 => Err(CliError::usage("config: repeats must be >= 1")),
            n => Ok(n),
        }
    }

    pub fn train_options(&self) -> CliResult<TrainOptions> {
        let mut opts = TrainOptions::default();
        if let Some(m) = self.max_outer {
            if m == 0 {
                return Err(CliError::usage("config: max_outer must be >= 1"));
            }
            opts.max_outer = m;
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(CliError::usage("config: tol must be positive"));
            }
            opts.tol = t;
        }
        Ok(opts)
    }
}

fn check_c(c: f64) -> CliResult<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(CliError::usage(format!("config: C must be positive and finite, got {c}")))
    }
}

fn non_empty<T>(name: &str, v: Vec<T>) -> CliResult<Vec<T>> {
    if v.is_empty() {
        Err(CliError::usage(format!("config: {name} must not be empty")))
    } else {
        Ok(v)
    }
}

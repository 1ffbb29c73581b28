//! `synth`: write a synthetic multi-task CSV.

use std::path::PathBuf;

use lpmtl::data::write_csv;
use lpmtl::synth_multitask;

use crate::config::SynthConfig;
use crate::error::CliResult;
use crate::output::emit;

pub struct SynthArgs {
    pub params: SynthConfig,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

pub fn run(args: &SynthArgs) -> CliResult<()> {
    let p = args.params;
    let data = synth_multitask::<f64>(p.tasks, p.per_task, p.dim, p.relatedness, p.noise, args.seed)?;
    let mut bytes = Vec::new();
    write_csv(&data, &mut bytes)?;
    emit(args.out.as_deref(), &bytes)
}

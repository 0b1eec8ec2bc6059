use std::path::PathBuf;

use clap::Args;

use spectformer_core::filters::dump_filters;
use spectformer_core::model::build::make_plan;
use spectformer_core::training::load_checkpoint;

use crate::{CliError, CliResult};

#[derive(Args, Debug, Clone)]
pub struct DumpFiltersArgs {
    /// Checkpoint whose spectral gates to visualize.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory for the PGM files and index.json.
    #[arg(long, default_value = "runs/filters")]
    pub out: PathBuf,
}

pub fn cmd_dump_filters(args: &DumpFiltersArgs) -> CliResult<()> {
    let ck = load_checkpoint::<f32>(&args.checkpoint).map_err(CliError::from)?;
    let plan = make_plan(&ck.meta.model).map_err(CliError::from)?;
    let index = dump_filters(&ck.params, &plan, &args.out).map_err(CliError::from)?;
    let files: usize = index.layers.iter().map(|l| l.files.len()).sum();
    println!(
        "wrote {} filter images across {} spectral layers under {}",
        files,
        index.layers.len(),
        args.out.display()
    );
    Ok(())
}

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use spectformer_core::model::build::make_plan;
use spectformer_core::training::{evaluate, load_checkpoint};

use crate::commands::train::DataKindArg;
use crate::runconfig::RunConfig;
use crate::{CliError, CliResult};

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset: synth, mnist, or cifar10.
    #[arg(long, value_enum, default_value = "synth")]
    pub data: DataKindArg,
    /// Directory holding the dataset files (mnist/cifar10).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Seed for synthetic data generation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override a data config key, e.g. --set data.sigma=0.1.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Evaluation batch size.
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let ck = load_checkpoint::<f32>(&args.checkpoint).map_err(CliError::from)?;
    let mut run = RunConfig {
        model: ck.meta.model.clone(),
        train: ck.meta.hyper.clone(),
        data: Default::default(),
    };
    run.data.kind = args.data.into();
    if let Some(dir) = &args.data_dir {
        run.data.dir = Some(dir.clone());
    }
    let run = run.apply_overrides(&args.sets)?;
    let (_, test_set) = run.load_data(args.seed)?;

    let plan = make_plan(&ck.meta.model).map_err(CliError::from)?;
    let result = evaluate(&plan, &ck.params, &test_set, args.batch).map_err(CliError::from)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "top1": result.top1,
            "top5": result.top5,
            "mean_loss": result.mean_loss,
        }))
        .map_err(|e| CliError::Other(e.to_string()))?
    );
    Ok(())
}

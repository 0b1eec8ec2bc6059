use std::path::PathBuf;

use clap::Args;

use spectformer_core::training::{fit, load_checkpoint};

use crate::runconfig::{DataKind, RunConfig};
use crate::{CliError, CliResult};

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Named config (see `count --all`) or path to a JSON config file.
    #[arg(long, default_value = "spectformer-tiny-toy")]
    pub model: String,
    /// Dataset: synth, mnist, or cifar10.
    #[arg(long, value_enum, default_value = "synth")]
    pub data: DataKindArg,
    /// Directory holding the dataset files (mnist/cifar10).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Seed for model init, batch order, and synthetic data.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for report.jsonl, summary.json, and checkpoints.
    #[arg(long, default_value = "runs/train")]
    pub out: PathBuf,
    /// Override a config key, e.g. --set model.alpha=2 or
    /// --set train.total_epochs=5. May be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Resume from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum DataKindArg {
    Synth,
    Mnist,
    Cifar10,
}

impl From<DataKindArg> for DataKind {
    fn from(v: DataKindArg) -> Self {
        match v {
            DataKindArg::Synth => DataKind::Synth,
            DataKindArg::Mnist => DataKind::Mnist,
            DataKindArg::Cifar10 => DataKind::Cifar10,
        }
    }
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let base = RunConfig::resolve(&args.model, Some(args.data.into()), args.data_dir.as_deref())?;
    let run = base.apply_overrides(&args.sets)?;
    let (train_set, test_set) = run.load_data(args.seed)?;

    let resume = match &args.resume {
        Some(path) => {
            let ck = load_checkpoint::<f32>(path).map_err(CliError::from)?;
            if ck.meta.model != run.model {
                return Err(CliError::Config(
                    "checkpoint model config does not match the requested model".into(),
                ));
            }
            Some(ck)
        }
        None => None,
    };

    let outcome = fit(
        &run.model,
        &train_set,
        &test_set,
        &run.train,
        args.seed,
        Some(&args.out),
        resume,
    )
    .map_err(CliError::from)?;

    println!(
        "trained {} epochs ({} steps): top1 {:.4} top5 {:.4} val_loss {:.4}",
        outcome.summary.epochs_run,
        outcome.summary.steps_run,
        outcome.summary.final_top1,
        outcome.summary.final_top5,
        outcome.summary.final_val_loss,
    );
    println!("artifacts under {}", args.out.display());
    Ok(())
}

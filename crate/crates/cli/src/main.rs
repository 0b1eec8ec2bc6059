//! SpectFormer command line: spectral-gated vision transformers at desk
//! scale. Subcommands: train, eval, count, ablate, dump-filters, predict.

use clap::{Parser, Subcommand};

use spectformer_cli::commands::{
    cmd_ablate, cmd_count, cmd_dump_filters, cmd_eval, cmd_predict, cmd_train, AblateArgs,
    CountArgs, DumpFiltersArgs, EvalArgs, PredictArgs, TrainArgs,
};

#[derive(Parser)]
#[command(
    name = "spectformer",
    about = "Spectral-gated vision transformers: training, cost accounting, ablations, and filter export",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write reports plus checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset (top-1/top-5/loss).
    Eval(EvalArgs),
    /// Print parameter counts and analytic FLOPs for named configs.
    Count(CountArgs),
    /// Sweep alpha / mixer / ordering grids under identical seeds.
    Ablate(AblateArgs),
    /// Export spectral gate magnitudes as PGM images.
    DumpFilters(DumpFiltersArgs),
    /// Classify one PGM/PPM image and print the top-5 probabilities.
    Predict(PredictArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Count(args) => cmd_count(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::DumpFilters(args) => cmd_dump_filters(args),
        Command::Predict(args) => cmd_predict(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

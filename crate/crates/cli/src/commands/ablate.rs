use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Args;
use serde::Serialize;

use spectformer_core::model::config::{BlockOrder, MixerKind, ModelConfig};
use spectformer_core::model::count::{count_flops, count_params};
use spectformer_core::training::fit;

use crate::commands::train::DataKindArg;
use crate::runconfig::RunConfig;
use crate::{CliError, CliResult};

#[derive(Args, Debug, Clone)]
pub struct AblateArgs {
    /// Base config (named or JSON path); grid points override alpha,
    /// mixer, and ordering on top of it.
    #[arg(long, default_value = "spectformer-tiny-toy")]
    pub model: String,
    /// Dataset: synth, mnist, or cifar10.
    #[arg(long, value_enum, default_value = "synth")]
    pub data: DataKindArg,
    /// Directory holding the dataset files (mnist/cifar10).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Comma-separated spectral-block counts to sweep; values above the
    /// model depth are skipped. Default: 0,2,4,6,8,10,12.
    #[arg(long, default_value = "0,2,4,6,8,10,12")]
    pub alphas: String,
    /// Comma-separated mixer variants to sweep (FN, FGN, FNO, WGN).
    #[arg(long, default_value = "FGN")]
    pub mixers: String,
    /// Add an inverse-ordering row (attention blocks first) at the base
    /// config's alpha.
    #[arg(long)]
    pub inverse: bool,
    /// Shared seed for every grid point, keeping runs comparable.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for ablate.json.
    #[arg(long, default_value = "runs/ablate")]
    pub out: PathBuf,
    /// Override a config key for the whole grid. May be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AblateRow {
    pub name: String,
    pub mixer: String,
    pub alpha: usize,
    pub order: String,
    pub params: u64,
    pub flops: u64,
    pub top1: f64,
    pub top5: f64,
}

fn parse_mixer(s: &str) -> CliResult<MixerKind> {
    match s.trim().to_uppercase().as_str() {
        "FN" => Ok(MixerKind::Fn),
        "FGN" => Ok(MixerKind::Fgn),
        "FNO" => Ok(MixerKind::Fno),
        "WGN" => Ok(MixerKind::Wgn),
        other => Err(CliError::Config(format!(
            "unknown mixer {other:?}: expected FN, FGN, FNO, or WGN"
        ))),
    }
}

/// Worker-thread cap from SPECTFORMER_THREADS (default 1).
fn worker_threads() -> usize {
    std::env::var("SPECTFORMER_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .map(|v| v.max(1))
        .unwrap_or(1)
}

pub fn cmd_ablate(args: &AblateArgs) -> CliResult<()> {
    let base = RunConfig::resolve(&args.model, Some(args.data.into()), args.data_dir.as_deref())?;
    let run = base.apply_overrides(&args.sets)?;

    let alphas: Vec<usize> = args
        .alphas
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("bad alpha value {s:?}")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mixers: Vec<MixerKind> = args
        .mixers
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(parse_mixer)
        .collect::<CliResult<Vec<_>>>()?;

    // grid: mixers x alphas (skipping alpha > depth), plus the inverse row
    let mut grid: Vec<ModelConfig> = Vec::new();
    for &mixer in &mixers {
        for &alpha in &alphas {
            if alpha > run.model.layers {
                continue;
            }
            let mut cfg = run.model.clone();
            cfg.mixer = mixer;
            cfg.alpha = alpha;
            cfg.order = BlockOrder::SpectralFirst;
            grid.push(cfg);
        }
        if args.inverse {
            let mut cfg = run.model.clone();
            cfg.mixer = mixer;
            cfg.order = BlockOrder::AttentionFirst;
            grid.push(cfg);
        }
    }
    if grid.is_empty() {
        return Err(CliError::Config("empty ablation grid".into()));
    }

    let (train_set, test_set) = run.load_data(args.seed)?;
    let total = grid.len();
    let slots: Mutex<Vec<Option<CliResult<AblateRow>>>> = Mutex::new(vec![None; total].into_iter().map(|_: Option<()>| None).collect());
    let next = AtomicUsize::new(0);
    let threads = worker_threads().min(total);

    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= total {
                    break;
                }
                let cfg = &grid[i];
                let row = run_point(cfg, &run, &train_set, &test_set, args.seed);
                slots.lock().unwrap()[i] = Some(row);
            });
        }
    });

    let mut rows = Vec::with_capacity(total);
    for slot in slots.into_inner().unwrap() {
        rows.push(slot.expect("worker filled every slot")?);
    }

    // ranked by top-1, ties toward the smaller model then the name
    rows.sort_by(|a, b| {
        b.top1
            .total_cmp(&a.top1)
            .then(a.params.cmp(&b.params))
            .then(a.name.cmp(&b.name))
    });

    println!(
        "{:<22} {:<6} {:>6} {:>12} {:>14} {:>8} {:>8}",
        "run", "mixer", "alpha", "params", "flops(MACs)", "top1", "top5"
    );
    for r in &rows {
        println!(
            "{:<22} {:<6} {:>6} {:>12} {:>14} {:>8.4} {:>8.4}",
            r.name, r.mixer, r.alpha, r.params, r.flops, r.top1, r.top5
        );
    }

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Other(e.to_string()))?;
    std::fs::write(
        args.out.join("ablate.json"),
        serde_json::to_vec_pretty(&rows).map_err(|e| CliError::Other(e.to_string()))?,
    )
    .map_err(|e| CliError::Other(e.to_string()))?;
    println!("wrote {}", args.out.join("ablate.json").display());
    Ok(())
}

fn run_point(
    cfg: &ModelConfig,
    run: &RunConfig,
    train_set: &spectformer_core::data::Dataset<f32>,
    test_set: &spectformer_core::data::Dataset<f32>,
    seed: u64,
) -> CliResult<AblateRow> {
    let params = count_params(cfg).map_err(CliError::from)?;
    let flops = count_flops(cfg).map_err(CliError::from)?.total();
    let outcome = fit(cfg, train_set, test_set, &run.train, seed, None, None).map_err(CliError::from)?;
    let order = match cfg.order {
        BlockOrder::SpectralFirst => "spectral-first",
        BlockOrder::AttentionFirst => "attention-first",
    };
    let name = match cfg.order {
        BlockOrder::SpectralFirst => format!("{}-a{}", cfg.mixer.name().to_lowercase(), cfg.alpha),
        BlockOrder::AttentionFirst => format!("i{}-a{}", cfg.mixer.name().to_lowercase(), cfg.alpha),
    };
    Ok(AblateRow {
        name,
        mixer: cfg.mixer.name().to_string(),
        alpha: cfg.alpha,
        order: order.to_string(),
        params,
        flops,
        top1: outcome.summary.final_top1,
        top5: outcome.summary.final_top5,
    })
}

use std::path::PathBuf;

use clap::Args;

use spectformer_core::io::pnm::read_pnm;
use spectformer_core::model::build::{forward, make_plan};
use spectformer_core::numerics::tensor::Tensor;
use spectformer_core::training::{load_checkpoint, topk_indices};

use crate::{CliError, CliResult};

#[derive(Args, Debug, Clone)]
pub struct PredictArgs {
    /// Checkpoint holding the trained model.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input image: binary PGM (P5) or PPM (P6) at the model resolution.
    #[arg(long)]
    pub image: PathBuf,
}

pub fn cmd_predict(args: &PredictArgs) -> CliResult<()> {
    let ck = load_checkpoint::<f32>(&args.checkpoint).map_err(CliError::from)?;
    let cfg = &ck.meta.model;
    let img = read_pnm(&args.image).map_err(CliError::from)?;
    if img.width != cfg.resolution || img.height != cfg.resolution {
        return Err(CliError::Config(format!(
            "image is {}x{} but the model expects {0}x{0}",
            img.width, img.height
        )));
    }
    if img.channels != cfg.in_channels {
        return Err(CliError::Config(format!(
            "image has {} channels but the model expects {}",
            img.channels, cfg.in_channels
        )));
    }

    // scale to [0, 1] and apply the training normalization from the checkpoint
    let mut pixels = Tensor::<f32>::zeros(&[1, img.height, img.width, img.channels]);
    for (dst, &src) in pixels.data_mut().iter_mut().zip(img.pixels.iter()) {
        *dst = src as f32 / 255.0;
    }
    ck.meta.norm.apply(&mut pixels);

    let plan = make_plan(cfg).map_err(CliError::from)?;
    let logits = forward(&plan, &ck.params, &pixels).map_err(CliError::from)?;

    // softmax in f64, max-subtracted
    let row: Vec<f64> = logits.data().iter().map(|&v| v as f64).collect();
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
    let denom: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|&e| e / denom).collect();
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(CliError::Other(format!("probabilities sum to {total}")));
    }

    for (rank, &class) in topk_indices(&probs, 5).iter().enumerate() {
        println!("{}. class {}: {:.6}", rank + 1, class, probs[class]);
    }
    Ok(())
}

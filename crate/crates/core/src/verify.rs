//! Canned finite-difference verification drivers (64-bit): standalone
//! residual blocks for every mixer variant, the attention block, the stage
//! merge, and a two-block model end to end including patch embedding and
//! the classification loss. Each returns the max relative error between
//! tape gradients and central differences at the given epsilon.

use crate::autodiff::check::grad_check;
use crate::autodiff::params::ParamStore;
use crate::autodiff::tape::Tape;
use crate::blocks::{
    attention_mix, downsample_merge, fno_mix, fourier_mix, init_attention, init_fno, init_gate,
    init_layer_norm, init_linear, init_mlp, init_wavelet_gates, residual_block, spectral_gate_mix,
    wavelet_gate_mix, Grid, WAVELET_BANDS,
};
use crate::error::Result;
use crate::model::build::{build_model, forward_rec};
use crate::model::config::{MixerKind, ModelConfig};
use crate::numerics::rng::Rng;
use crate::numerics::tensor::Tensor;

const GRID: Grid = Grid { h: 4, w: 4 };
const CHANNELS: usize = 8;

fn block_store(kind: Option<MixerKind>, heads: usize, seed: u64) -> Result<ParamStore<f64>> {
    let mut store = ParamStore::new();
    let mut rng = Rng::seeded(seed);
    init_layer_norm(&mut store, "b.norm1", CHANNELS)?;
    match kind {
        Some(MixerKind::Fgn) => init_gate(&mut store, &mut rng, "b.gate", GRID, CHANNELS)?,
        Some(MixerKind::Fno) => init_fno(&mut store, &mut rng, "b.fno", 2, 2, CHANNELS)?,
        Some(MixerKind::Wgn) => init_wavelet_gates(&mut store, &mut rng, "b.wg", GRID, CHANNELS)?,
        Some(MixerKind::Fn) | None => {}
    }
    if kind.is_none() {
        init_attention(&mut store, &mut rng, "b.attn", CHANNELS, heads)?;
    }
    init_layer_norm(&mut store, "b.norm2", CHANNELS)?;
    init_mlp(&mut store, &mut rng, "b.mlp", CHANNELS, 2)?;
    Ok(store)
}

fn weighted_sum_loss(
    tape: &mut Tape<f64>,
    out: crate::autodiff::tape::NodeId,
    weights: &Tensor<f64>,
) -> Result<crate::autodiff::tape::NodeId> {
    let w = tape.input(weights.clone());
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

/// Add a small linear probe over every trainable parameter to the loss.
///
/// Some directions leave the model loss exactly invariant (a uniform shift
/// of the attention keys, for one), so their true gradient is zero and a
/// central difference there measures nothing but rounding noise. The probe
/// gives every element a known nonzero gradient component; being linear it
/// is exact under central differences and cannot mask a VJP defect.
fn probe_loss(
    tape: &mut Tape<f64>,
    loss: crate::autodiff::tape::NodeId,
    store: &ParamStore<f64>,
    seed: u64,
) -> Result<crate::autodiff::tape::NodeId> {
    let mut probe_rng = Rng::seeded(seed);
    let mut total = loss;
    for i in 0..store.len() {
        if !store.trainable_at(i) {
            continue;
        }
        let name = store.name_at(i).to_string();
        let shape = store.tensor_at(i).shape().to_vec();
        let mut probe = Tensor::zeros(&shape);
        for v in probe.data_mut() {
            *v = 1e-3 * (1.0 + probe_rng.next_f64());
        }
        let p = tape.param(store, &name)?;
        let r = tape.input(probe);
        let prod = tape.mul(p, r)?;
        let s = tape.sum(prod)?;
        total = tape.add(total, s)?;
    }
    Ok(total)
}

/// FD error of one full residual block built around the given spectral
/// mixer variant.
pub fn mixer_grad_error(kind: MixerKind, eps: f64) -> Result<f64> {
    let mut store = block_store(Some(kind), 0, 1000 + kind.name().len() as u64)?;
    let x: Tensor<f64> = Rng::seeded(2)
        .normal_tensor(&[GRID.tokens(), CHANNELS], 0.0, 1.0)?;
    let weights: Tensor<f64> = Rng::seeded(3)
        .normal_tensor(&[GRID.tokens(), CHANNELS], 0.0, 1.0)?;
    grad_check(
        move |store, tape| {
            let xi = tape.input(x.clone());
            let out = residual_block(tape, store, xi, "b", |tape, normed| match kind {
                MixerKind::Fgn => {
                    let kr = tape.param(store, "b.gate.re")?;
                    let ki = tape.param(store, "b.gate.im")?;
                    spectral_gate_mix(tape, normed, GRID, kr, ki)
                }
                MixerKind::Fn => fourier_mix(tape, normed, GRID),
                MixerKind::Fno => {
                    let wre = tape.param(store, "b.fno.re")?;
                    let wim = tape.param(store, "b.fno.im")?;
                    fno_mix(tape, normed, GRID, wre, wim, 2, 2)
                }
                MixerKind::Wgn => {
                    let mut gates = [crate::autodiff::tape::NodeId(0); 4];
                    for (slot, band) in gates.iter_mut().zip(WAVELET_BANDS) {
                        *slot = tape.param(store, &format!("b.wg.{band}"))?;
                    }
                    wavelet_gate_mix(tape, normed, GRID, gates)
                }
            })?;
            let loss = weighted_sum_loss(tape, out, &weights)?;
            probe_loss(tape, loss, store, 90)
        },
        &mut store,
        eps,
    )
}

/// FD error of a full attention residual block.
pub fn attention_grad_error(eps: f64) -> Result<f64> {
    let mut store = block_store(None, 2, 2000)?;
    let x: Tensor<f64> = Rng::seeded(4)
        .normal_tensor(&[GRID.tokens(), CHANNELS], 0.0, 1.0)?;
    let weights: Tensor<f64> = Rng::seeded(5)
        .normal_tensor(&[GRID.tokens(), CHANNELS], 0.0, 1.0)?;
    grad_check(
        move |store, tape| {
            let xi = tape.input(x.clone());
            let out = residual_block(tape, store, xi, "b", |tape, normed| {
                let wq = tape.param(store, "b.attn.qkv.weight")?;
                let bq = tape.param(store, "b.attn.qkv.bias")?;
                let wp = tape.param(store, "b.attn.proj.weight")?;
                let bp = tape.param(store, "b.attn.proj.bias")?;
                attention_mix(tape, normed, 2, wq, bq, wp, bp)
            })?;
            let loss = weighted_sum_loss(tape, out, &weights)?;
            probe_loss(tape, loss, store, 91)
        },
        &mut store,
        eps,
    )
}

/// FD error through the 2x2 stage merge.
pub fn merge_grad_error(eps: f64) -> Result<f64> {
    let mut store = ParamStore::new();
    let mut rng = Rng::seeded(6);
    init_linear(&mut store, &mut rng, "merge", 4 * CHANNELS, 6)?;
    init_layer_norm(&mut store, "merge.norm", 6)?;
    let x: Tensor<f64> = Rng::seeded(7)
        .normal_tensor(&[GRID.tokens(), CHANNELS], 0.0, 1.0)?;
    let weights: Tensor<f64> = Rng::seeded(8)
        .normal_tensor(&[GRID.tokens() / 4, 6], 0.0, 1.0)?;
    grad_check(
        move |store, tape| {
            let xi = tape.input(x.clone());
            let out = downsample_merge(tape, store, xi, GRID, "merge")?;
            let loss = weighted_sum_loss(tape, out, &weights)?;
            probe_loss(tape, loss, store, 92)
        },
        &mut store,
        eps,
    )
}

/// FD error of a two-block model (one spectral, one attention, C = 16)
/// end to end: patch embedding, position table, both blocks, pooled head,
/// and smoothed cross entropy.
pub fn tiny_model_grad_error(eps: f64) -> Result<f64> {
    let mut cfg = ModelConfig::vanilla(2, 1, 16, 2, 8, 32, 3);
    cfg.in_channels = 1;
    cfg.expansion = 2;
    let mut rng = Rng::seeded(9);
    let (mut params, plan) = build_model::<f64>(&cfg, &mut rng)?;
    let images: Tensor<f64> = Rng::seeded(10).normal_tensor(&[2, 32, 32, 1], 0.0, 1.0)?;
    let labels = vec![0usize, 2];
    grad_check(
        move |params, tape| {
            let logits = forward_rec(&plan, params, tape, &images)?;
            let loss = tape.cross_entropy(logits, &labels, 0.1)?;
            probe_loss(tape, loss, params, 93)
        },
        &mut params,
        eps,
    )
}

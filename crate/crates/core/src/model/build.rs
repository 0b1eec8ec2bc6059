//! Model assembly: resolve a config into an executable layer plan, register
//! parameters, and record the batched forward pass.

use crate::autodiff::params::ParamStore;
use crate::autodiff::tape::{NodeId, Tape};
use crate::blocks::{
    self, add_pos_embed, attention_mix_batched, downsample_merge, extract_patches, fno_mix,
    fourier_mix, layer_norm_named, linear_named, map_batch, residual_block, wavelet_gate_mix, Grid,
};
use crate::error::{Error, Result};
use crate::model::config::{BlockOrder, MixerKind, ModelConfig, ModelKind};
use crate::numerics::rng::Rng;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Spectral(MixerKind),
    Attention,
}

#[derive(Clone, Debug)]
pub struct BlockPlan {
    pub prefix: String,
    pub kind: BlockKind,
    pub grid: Grid,
    pub dim: usize,
    pub heads: usize,
    pub expansion: usize,
    /// Retained FNO modes (rows, stored cols); equals the full spectrum
    /// unless the config truncates.
    pub fno_modes: (usize, usize),
}

#[derive(Clone, Debug)]
pub struct StagePlan {
    /// Merge layer reducing the previous stage's grid into this one
    /// (absent for the first stage).
    pub merge: Option<String>,
    pub grid: Grid,
    pub dim: usize,
    pub blocks: Vec<BlockPlan>,
}

/// Resolved execution plan; the single source of layer ordering for
/// building, forward passes, and the filter dump.
#[derive(Clone, Debug)]
pub struct Plan {
    pub cfg: ModelConfig,
    pub stages: Vec<StagePlan>,
}

/// Reference to one spectral gate (FGN) in plan order.
#[derive(Clone, Debug)]
pub struct GateRef {
    pub layer: usize,
    pub prefix: String,
    pub grid: Grid,
    pub channels: usize,
}

impl Plan {
    pub fn head_dim(&self) -> usize {
        self.stages.last().map(|s| s.dim).unwrap_or(0)
    }

    /// FGN gates in forward order (for the filter dump).
    pub fn spectral_gates(&self) -> Vec<GateRef> {
        let mut out = Vec::new();
        for stage in &self.stages {
            for block in &stage.blocks {
                if let BlockKind::Spectral(MixerKind::Fgn) = block.kind {
                    out.push(GateRef {
                        layer: out.len(),
                        prefix: format!("{}.gate", block.prefix),
                        grid: block.grid,
                        channels: block.dim,
                    });
                }
            }
        }
        out
    }
}

fn block_sequence(spectral: usize, attention: usize, order: BlockOrder) -> Vec<bool> {
    // true = spectral
    let mut seq = Vec::with_capacity(spectral + attention);
    match order {
        BlockOrder::SpectralFirst => {
            seq.extend(std::iter::repeat(true).take(spectral));
            seq.extend(std::iter::repeat(false).take(attention));
        }
        BlockOrder::AttentionFirst => {
            seq.extend(std::iter::repeat(false).take(attention));
            seq.extend(std::iter::repeat(true).take(spectral));
        }
    }
    seq
}

pub fn make_plan(cfg: &ModelConfig) -> Result<Plan> {
    cfg.validate()?;
    let mut stages = Vec::new();
    match cfg.kind {
        ModelKind::Vanilla => {
            let (gh, gw) = cfg.vanilla_grid();
            let grid = Grid { h: gh, w: gw };
            let fno_full = (gh, gw / 2 + 1);
            let fno_modes = cfg.fno_modes.map(|[a, b]| (a, b)).unwrap_or(fno_full);
            let blocks = block_sequence(cfg.alpha, cfg.layers - cfg.alpha, cfg.order)
                .iter()
                .enumerate()
                .map(|(i, &is_spectral)| BlockPlan {
                    prefix: format!("block{i}"),
                    kind: if is_spectral {
                        BlockKind::Spectral(cfg.mixer)
                    } else {
                        BlockKind::Attention
                    },
                    grid,
                    dim: cfg.dim,
                    heads: cfg.heads,
                    expansion: cfg.expansion,
                    fno_modes,
                })
                .collect();
            stages.push(StagePlan {
                merge: None,
                grid,
                dim: cfg.dim,
                blocks,
            });
        }
        ModelKind::Hierarchical => {
            for (si, st) in cfg.stages.iter().enumerate() {
                let side = cfg.stage_grid_side(si);
                let grid = Grid { h: side, w: side };
                let fno_full = (side, side / 2 + 1);
                let blocks = block_sequence(st.spectral, st.attention, cfg.order)
                    .iter()
                    .enumerate()
                    .map(|(i, &is_spectral)| BlockPlan {
                        prefix: format!("stage{si}.block{i}"),
                        kind: if is_spectral {
                            BlockKind::Spectral(cfg.mixer)
                        } else {
                            BlockKind::Attention
                        },
                        grid,
                        dim: st.channels,
                        heads: st.heads,
                        expansion: st.expansion,
                        fno_modes: fno_full,
                    })
                    .collect();
                stages.push(StagePlan {
                    merge: (si > 0).then(|| format!("stage{si}.merge")),
                    grid,
                    dim: st.channels,
                    blocks,
                });
            }
        }
    }
    Ok(Plan { cfg: cfg.clone(), stages })
}

fn register_block<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut Rng,
    block: &BlockPlan,
) -> Result<()> {
    let prefix = &block.prefix;
    let c = block.dim;
    blocks::init_layer_norm(store, &format!("{prefix}.norm1"), c)?;
    match block.kind {
        BlockKind::Spectral(MixerKind::Fgn) => {
            blocks::init_gate(store, rng, &format!("{prefix}.gate"), block.grid, c)?;
        }
        BlockKind::Spectral(MixerKind::Fn) => {}
        BlockKind::Spectral(MixerKind::Fno) => {
            let (mh, mw) = block.fno_modes;
            blocks::init_fno(store, rng, &format!("{prefix}.fno"), mh, mw, c)?;
        }
        BlockKind::Spectral(MixerKind::Wgn) => {
            blocks::init_wavelet_gates(store, rng, &format!("{prefix}.wg"), block.grid, c)?;
        }
        BlockKind::Attention => {
            blocks::init_attention(store, rng, &format!("{prefix}.attn"), c, block.heads)?;
        }
    }
    blocks::init_layer_norm(store, &format!("{prefix}.norm2"), c)?;
    blocks::init_mlp(store, rng, &format!("{prefix}.mlp"), c, block.expansion)
}

/// Build a model: register every parameter (deterministically from `rng`)
/// and return the store alongside the executable plan.
pub fn build_model<T: Scalar>(cfg: &ModelConfig, rng: &mut Rng) -> Result<(ParamStore<T>, Plan)> {
    let plan = make_plan(cfg)?;
    let mut store = ParamStore::new();

    let first = &plan.stages[0];
    let token_dim = cfg.patch * cfg.patch * cfg.in_channels;
    blocks::init_linear(&mut store, rng, "patch", token_dim, first.dim)?;
    store.insert(
        "pos",
        rng.trunc_normal_tensor(&[first.grid.tokens(), first.dim], blocks::INIT_STD),
        true,
        true,
    )?;

    let mut prev_dim = first.dim;
    for stage in &plan.stages {
        if let Some(merge) = &stage.merge {
            blocks::init_linear(&mut store, rng, merge, 4 * prev_dim, stage.dim)?;
            blocks::init_layer_norm(&mut store, &format!("{merge}.norm"), stage.dim)?;
        }
        for block in &stage.blocks {
            register_block(&mut store, rng, block)?;
        }
        prev_dim = stage.dim;
    }

    blocks::init_layer_norm(&mut store, "norm", prev_dim)?;
    blocks::init_linear(&mut store, rng, "head", prev_dim, cfg.num_classes)?;
    Ok((store, plan))
}

fn record_mixer<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    block: &BlockPlan,
    batch: usize,
    normed: NodeId,
) -> Result<NodeId> {
    let tokens = block.grid.tokens();
    match block.kind {
        BlockKind::Spectral(MixerKind::Fgn) => {
            let kr = tape.param(store, &format!("{}.gate.re", block.prefix))?;
            let ki = tape.param(store, &format!("{}.gate.im", block.prefix))?;
            tape.spectral_gate(normed, kr, ki, batch, block.grid.h, block.grid.w)
        }
        BlockKind::Spectral(MixerKind::Fn) => {
            map_batch(tape, normed, batch, tokens, |tape, xi| {
                fourier_mix(tape, xi, block.grid)
            })
        }
        BlockKind::Spectral(MixerKind::Fno) => {
            let wre = tape.param(store, &format!("{}.fno.re", block.prefix))?;
            let wim = tape.param(store, &format!("{}.fno.im", block.prefix))?;
            let (mh, mw) = block.fno_modes;
            map_batch(tape, normed, batch, tokens, |tape, xi| {
                fno_mix(tape, xi, block.grid, wre, wim, mh, mw)
            })
        }
        BlockKind::Spectral(MixerKind::Wgn) => {
            let mut gates = [NodeId(0); 4];
            for (slot, band) in gates.iter_mut().zip(blocks::WAVELET_BANDS) {
                *slot = tape.param(store, &format!("{}.wg.{band}", block.prefix))?;
            }
            map_batch(tape, normed, batch, tokens, |tape, xi| {
                wavelet_gate_mix(tape, xi, block.grid, gates)
            })
        }
        BlockKind::Attention => attention_mix_batched(
            tape,
            normed,
            batch,
            tokens,
            block.heads,
            store,
            &format!("{}.attn", block.prefix),
        ),
    }
}

/// Record the full forward pass onto `tape`; returns the `[B, num_classes]`
/// logits node. Batch elements are independent.
pub fn forward_rec<T: Scalar>(
    plan: &Plan,
    store: &ParamStore<T>,
    tape: &mut Tape<T>,
    images: &Tensor<T>,
) -> Result<NodeId> {
    let cfg = &plan.cfg;
    let (batch, h, w, ch) = match images.shape() {
        [b, h, w, ch] => (*b, *h, *w, *ch),
        [h, w, ch] => (1, *h, *w, *ch),
        other => {
            return Err(Error::shape(format!(
                "expected [B, H, W, Ch] images, got {other:?}"
            )))
        }
    };
    if h != cfg.resolution || w != cfg.resolution {
        return Err(Error::shape(format!(
            "resolution mismatch: model expects {0}x{0}, got {h}x{w}",
            cfg.resolution
        )));
    }
    if ch != cfg.in_channels {
        return Err(Error::shape(format!(
            "channel mismatch: model expects {} input channels, got {ch}",
            cfg.in_channels
        )));
    }

    let patches = extract_patches(images, cfg.patch)?;
    let tokens0 = tape.input(patches);
    let mut x = linear_named(tape, store, tokens0, "patch")?;
    let pos = tape.param(store, "pos")?;
    x = add_pos_embed(tape, x, pos, batch)?;

    let mut prev_grid = plan.stages[0].grid;
    for stage in &plan.stages {
        if let Some(merge) = &stage.merge {
            let tokens_in = prev_grid.tokens();
            x = map_batch(tape, x, batch, tokens_in, |tape, xi| {
                downsample_merge(tape, store, xi, prev_grid, merge)
            })?;
        }
        for block in &stage.blocks {
            x = residual_block(tape, store, x, &block.prefix, |tape, normed| {
                record_mixer(tape, store, block, batch, normed)
            })?;
        }
        prev_grid = stage.grid;
    }

    let x = layer_norm_named(tape, store, x, "norm")?;

    // global average pool over tokens, per batch element
    let n = prev_grid.tokens();
    let dim = plan.head_dim();
    let avg_row = tape.input(Tensor::filled(&[1, n], T::from_f64(1.0 / n as f64)));
    let pooled = map_batch(tape, x, batch, n, |tape, xi| tape.matmul(avg_row, xi))?;
    let pooled = tape.reshape(pooled, &[batch, dim])?;
    linear_named(tape, store, pooled, "head")
}

/// Convenience forward returning the logits tensor (fresh internal tape).
pub fn forward<T: Scalar>(
    plan: &Plan,
    store: &ParamStore<T>,
    images: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let logits = forward_rec(plan, store, &mut tape, images)?;
    Ok(tape.real(logits)?.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::{config_by_name, ModelConfig};

    fn tiny_cfg() -> ModelConfig {
        let mut cfg = ModelConfig::vanilla(2, 1, 16, 2, 8, 32, 3);
        cfg.in_channels = 1;
        cfg.expansion = 2;
        cfg
    }

    #[test]
    fn alpha_split_matches_rule() {
        // alpha = 0: all attention; alpha = L: all spectral; alpha = 4 of 12:
        // blocks 1..4 spectral, 5..12 attention
        for (alpha, expect_spectral) in [(0usize, 0usize), (12, 12), (4, 4)] {
            let mut cfg = ModelConfig::vanilla(12, alpha, 64, 4, 16, 224, 10);
            cfg.in_channels = 3;
            let plan = make_plan(&cfg).unwrap();
            let blocks = &plan.stages[0].blocks;
            let n_spec = blocks
                .iter()
                .filter(|b| matches!(b.kind, BlockKind::Spectral(_)))
                .count();
            assert_eq!(n_spec, expect_spectral);
            for (i, b) in blocks.iter().enumerate() {
                let is_spec = matches!(b.kind, BlockKind::Spectral(_));
                assert_eq!(is_spec, i < alpha, "alpha {alpha} block {i}");
            }
        }
    }

    #[test]
    fn inverse_order_swaps_runs() {
        let mut cfg = ModelConfig::vanilla(6, 2, 16, 2, 8, 32, 3);
        cfg.order = crate::model::config::BlockOrder::AttentionFirst;
        let plan = make_plan(&cfg).unwrap();
        let kinds: Vec<bool> = plan.stages[0]
            .blocks
            .iter()
            .map(|b| matches!(b.kind, BlockKind::Spectral(_)))
            .collect();
        assert_eq!(kinds, vec![false, false, false, false, true, true]);
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let cfg = tiny_cfg();
        let mut rng = Rng::seeded(1);
        let (store, plan) = build_model::<f32>(&cfg, &mut rng).unwrap();
        let images: Tensor<f32> = Rng::seeded(2).normal_tensor(&[2, 32, 32, 1], 0.0, 1.0).unwrap();
        let a = forward(&plan, &store, &images).unwrap();
        assert_eq!(a.shape(), &[2, 3]);
        let b = forward(&plan, &store, &images).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn batch_elements_are_independent() {
        let cfg = tiny_cfg();
        let mut rng = Rng::seeded(3);
        let (store, plan) = build_model::<f32>(&cfg, &mut rng).unwrap();
        let batch: Tensor<f32> = Rng::seeded(4).normal_tensor(&[4, 32, 32, 1], 0.0, 1.0).unwrap();
        let logits = forward(&plan, &store, &batch).unwrap();
        // run element 2 alone
        let mut single = Tensor::<f32>::zeros(&[1, 32, 32, 1]);
        let stride = 32 * 32;
        single
            .data_mut()
            .copy_from_slice(&batch.data()[2 * stride..3 * stride]);
        let alone = forward(&plan, &store, &single).unwrap();
        for j in 0..3 {
            let diff = (alone.at(&[0, j]) - logits.at(&[2, j])).abs();
            assert!(diff < 1e-6, "class {j}: {diff}");
        }
    }

    #[test]
    fn resolution_mismatch_rejected() {
        let cfg = tiny_cfg();
        let mut rng = Rng::seeded(5);
        let (store, plan) = build_model::<f32>(&cfg, &mut rng).unwrap();
        let wrong: Tensor<f32> = Tensor::zeros(&[1, 64, 64, 1]);
        assert!(forward(&plan, &store, &wrong).is_err());
    }

    #[test]
    fn hierarchical_stage_grids_follow_pyramid() {
        let mut cfg = config_by_name("spectformer-h-s").unwrap();
        cfg.resolution = 64;
        let plan = make_plan(&cfg).unwrap();
        let sides: Vec<usize> = plan.stages.iter().map(|s| s.grid.h).collect();
        assert_eq!(sides, vec![16, 8, 4, 2]);
    }
}

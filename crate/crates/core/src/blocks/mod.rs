//! The layer zoo: patch/position embedding, MLP, multi-head self-attention,
//! the four spectral token mixers (FN, FGN, FNO, WGN), and the stage merge.
//! Every forward here records onto a [`Tape`]; parameter initialization
//! registers named tensors into a [`ParamStore`].

use crate::autodiff::params::ParamStore;
use crate::autodiff::tape::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::numerics::rng::Rng;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

pub const INIT_STD: f64 = 0.02;

/// Token raster dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    pub h: usize,
    pub w: usize,
}

impl Grid {
    pub fn tokens(&self) -> usize {
        self.h * self.w
    }
}

// ---------------------------------------------------------------------------
// Patch extraction (eager; raw pixels carry no gradient)
// ---------------------------------------------------------------------------

/// Flatten non-overlapping patches into token rows: `[B, H, W, Ch]` (or a
/// single `[H, W, Ch]` image) -> `[B*N, patch*patch*Ch]`, tokens in raster
/// order, each patch flattened over (dy, dx, channel).
pub fn extract_patches<T: Scalar>(images: &Tensor<T>, patch: usize) -> Result<Tensor<T>> {
    let (b, h, w, ch) = match images.shape() {
        [b, h, w, ch] => (*b, *h, *w, *ch),
        [h, w, ch] => (1, *h, *w, *ch),
        other => {
            return Err(Error::shape(format!(
                "expected [B, H, W, Ch] or [H, W, Ch] image tensor, got {other:?}"
            )))
        }
    };
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::shape(format!(
            "image {h}x{w} not divisible by patch {patch}"
        )));
    }
    let (gh, gw) = (h / patch, w / patch);
    let n = gh * gw;
    let d = patch * patch * ch;
    let mut out = Tensor::zeros(&[b * n, d]);
    let src = images.data();
    for bi in 0..b {
        for ti in 0..gh {
            for tj in 0..gw {
                let row = bi * n + ti * gw + tj;
                let mut k = 0usize;
                for dy in 0..patch {
                    for dx in 0..patch {
                        let base = ((bi * h + ti * patch + dy) * w + tj * patch + dx) * ch;
                        for c in 0..ch {
                            out.data_mut()[row * d + k] = src[base + c];
                            k += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parameter initialization
// ---------------------------------------------------------------------------

pub fn init_linear<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut Rng,
    prefix: &str,
    d_in: usize,
    d_out: usize,
) -> Result<()> {
    store.insert(
        format!("{prefix}.weight"),
        rng.trunc_normal_tensor(&[d_in, d_out], INIT_STD),
        true,
        true,
    )?;
    store.insert(format!("{prefix}.bias"), Tensor::zeros(&[d_out]), true, false)
}

pub fn init_layer_norm<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, c: usize) -> Result<()> {
    store.insert(format!("{prefix}.scale"), Tensor::filled(&[c], T::ONE), true, false)?;
    store.insert(format!("{prefix}.shift"), Tensor::zeros(&[c]), true, false)
}

/// FGN gate: near-identity start, k ~= 1 + 0i with small noise.
pub fn init_gate<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut Rng,
    prefix: &str,
    grid: Grid,
    c: usize,
) -> Result<()> {
    let wh = grid.w / 2 + 1;
    let re = rng
        .normal_tensor::<T>(&[grid.h, wh, c], 1.0, INIT_STD)
        .expect("nonnegative std");
    let im = rng
        .normal_tensor::<T>(&[grid.h, wh, c], 0.0, INIT_STD)
        .expect("nonnegative std");
    store.insert(format!("{prefix}.re"), re, true, false)?;
    store.insert(format!("{prefix}.im"), im, true, false)
}

pub const WAVELET_BANDS: [&str; 4] = ["ll", "lh", "hl", "hh"];

/// WGN gates: one per Haar subband, near-identity start.
pub fn init_wavelet_gates<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut Rng,
    prefix: &str,
    grid: Grid,
    c: usize,
) -> Result<()> {
    if grid.h % 2 != 0 || grid.w % 2 != 0 {
        return Err(Error::config(format!(
            "wavelet gating requires an even token grid, got {}x{}",
            grid.h, grid.w
        )));
    }
    for band in WAVELET_BANDS {
        let g = rng
            .normal_tensor::<T>(&[grid.h / 2, grid.w / 2, c], 1.0, INIT_STD)
            .expect("nonnegative std");
        store.insert(format!("{prefix}.{band}"), g, true, false)?;
    }
    Ok(())
}

/// FNO weights: per retained mode a complex C x C channel-mixing matrix,
/// initialized near the identity so the mixer starts close to a pass-through.
pub fn init_fno<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut Rng,
    prefix: &str,
    modes_h: usize,
    modes_w: usize,
    c: usize,
) -> Result<()> {
    let mut re = rng
        .normal_tensor::<T>(&[modes_h, modes_w, c, c], 0.0, INIT_STD)
        .expect("nonnegative std");
    for f in 0..modes_h * modes_w {
        for i in 0..c {
            re.data_mut()[(f * c + i) * c + i] += T::ONE;
        }
    }
    let im = rng
        .normal_tensor::<T>(&[modes_h, modes_w, c, c], 0.0, INIT_STD)
        .expect("nonnegative std");
    store.insert(format!("{prefix}.re"), re, true, true)?;
    store.insert(format!("{prefix}.im"), im, true, true)
}

pub fn init_attention<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut Rng,
    prefix: &str,
    c: usize,
    heads: usize,
) -> Result<()> {
    if heads == 0 || c % heads != 0 {
        return Err(Error::config(format!(
            "channels {c} not divisible by heads {heads}"
        )));
    }
    init_linear(store, rng, &format!("{prefix}.qkv"), c, 3 * c)?;
    init_linear(store, rng, &format!("{prefix}.proj"), c, c)
}

pub fn init_mlp<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut Rng,
    prefix: &str,
    c: usize,
    expansion: usize,
) -> Result<()> {
    init_linear(store, rng, &format!("{prefix}.fc1"), c, expansion * c)?;
    init_linear(store, rng, &format!("{prefix}.fc2"), expansion * c, c)
}

// ---------------------------------------------------------------------------
// Forward recorders
// ---------------------------------------------------------------------------

/// x W + b.
pub fn linear<T: Scalar>(tape: &mut Tape<T>, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
    let xw = tape.matmul(x, w)?;
    tape.add(xw, b)
}

/// Linear layer straight from the store.
pub fn linear_named<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    x: NodeId,
    prefix: &str,
) -> Result<NodeId> {
    let w = tape.param(store, &format!("{prefix}.weight"))?;
    let b = tape.param(store, &format!("{prefix}.bias"))?;
    linear(tape, x, w, b)
}

pub fn layer_norm_named<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    x: NodeId,
    prefix: &str,
) -> Result<NodeId> {
    let scale = tape.param(store, &format!("{prefix}.scale"))?;
    let shift = tape.param(store, &format!("{prefix}.shift"))?;
    tape.layer_norm(x, scale, shift)
}

/// Tokens `[B*N, C]` plus a learnable `[N, C]` position table, broadcast
/// over the batch.
pub fn add_pos_embed<T: Scalar>(
    tape: &mut Tape<T>,
    tokens: NodeId,
    pos: NodeId,
    batch: usize,
) -> Result<NodeId> {
    let tshape = tape.real(tokens)?.shape().to_vec();
    let pshape = tape.real(pos)?.shape().to_vec();
    if tshape.len() != 2
        || pshape.len() != 2
        || tshape[0] != batch * pshape[0]
        || tshape[1] != pshape[1]
    {
        return Err(Error::shape(format!(
            "pos embed {pshape:?} incompatible with tokens {tshape:?} at batch {batch}"
        )));
    }
    let (n, c) = (pshape[0], pshape[1]);
    let flat_tokens = tape.reshape(tokens, &[batch, n * c])?;
    let flat_pos = tape.reshape(pos, &[n * c])?;
    let sum = tape.add(flat_tokens, flat_pos)?;
    tape.reshape(sum, &[batch * n, c])
}

/// MLP channel mixer: fc1 -> GELU -> fc2.
pub fn mlp<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    x: NodeId,
    prefix: &str,
) -> Result<NodeId> {
    let h = linear_named(tape, store, x, &format!("{prefix}.fc1"))?;
    let a = tape.gelu(h)?;
    linear_named(tape, store, a, &format!("{prefix}.fc2"))
}

/// Apply a per-element function over a batched token matrix `[B*N, C]`:
/// slice each element's `[N, C]` rows, map, re-stack.
pub fn map_batch<T: Scalar>(
    tape: &mut Tape<T>,
    x: NodeId,
    batch: usize,
    tokens: usize,
    mut f: impl FnMut(&mut Tape<T>, NodeId) -> Result<NodeId>,
) -> Result<NodeId> {
    let shape = tape.real(x)?.shape().to_vec();
    if shape.len() != 2 || shape[0] != batch * tokens {
        return Err(Error::shape(format!(
            "expected [{batch}*{tokens}, C] tokens, got {shape:?}"
        )));
    }
    let c = shape[1];
    if batch == 1 {
        return f(tape, x);
    }
    let mut parts = Vec::with_capacity(batch);
    for bi in 0..batch {
        let xi = tape.slice2(x, bi * tokens, (bi + 1) * tokens, 0, c)?;
        parts.push(f(tape, xi)?);
    }
    tape.concat0(&parts)
}

// --- token mixers (single grid, tokens [N, C]) ---

fn to_grid<T: Scalar>(tape: &mut Tape<T>, x: NodeId, grid: Grid) -> Result<NodeId> {
    let shape = tape.real(x)?.shape().to_vec();
    if shape.len() != 2 || shape[0] != grid.tokens() {
        return Err(Error::shape(format!(
            "token count {shape:?} is not a {}x{} raster",
            grid.h, grid.w
        )));
    }
    tape.reshape(x, &[grid.h, grid.w, shape[1]])
}

fn to_tokens<T: Scalar>(tape: &mut Tape<T>, x: NodeId, grid: Grid) -> Result<NodeId> {
    let c = *tape.real(x)?.shape().last().unwrap();
    tape.reshape(x, &[grid.tokens(), c])
}

/// FGN gate sub-step: irfft2(K (.) rfft2(x)) on one token grid. Runs on
/// the fused batched kernel with batch 1.
pub fn spectral_gate_mix<T: Scalar>(
    tape: &mut Tape<T>,
    x: NodeId,
    grid: Grid,
    k_re: NodeId,
    k_im: NodeId,
) -> Result<NodeId> {
    let shape = tape.real(x)?.shape().to_vec();
    if shape.len() != 2 || shape[0] != grid.tokens() {
        return Err(Error::shape(format!(
            "token count {shape:?} is not a {}x{} raster",
            grid.h, grid.w
        )));
    }
    tape.spectral_gate(x, k_re, k_im, 1, grid.h, grid.w)
}

/// FN mixer: real part of the full 2-D FFT, no learnable parameters.
pub fn fourier_mix<T: Scalar>(tape: &mut Tape<T>, x: NodeId, grid: Grid) -> Result<NodeId> {
    let g = to_grid(tape, x, grid)?;
    let mixed = tape.fft2_real(g)?;
    to_tokens(tape, mixed, grid)
}

/// FNO mixer: truncate to retained low modes, complex channel mixing per
/// mode, inverse transform.
pub fn fno_mix<T: Scalar>(
    tape: &mut Tape<T>,
    x: NodeId,
    grid: Grid,
    w_re: NodeId,
    w_im: NodeId,
    modes_h: usize,
    modes_w: usize,
) -> Result<NodeId> {
    let g = to_grid(tape, x, grid)?;
    let spec = tape.rfft2(g)?;
    let mixed = tape.mode_mix(spec, w_re, w_im, modes_h, modes_w)?;
    let back = tape.irfft2(mixed)?;
    to_tokens(tape, back, grid)
}

/// WGN mixer: Haar analysis, per-subband learnable gates, synthesis.
/// `gates` are the LL, LH, HL, HH parameter nodes, each `[H/2, W/2, C]`.
pub fn wavelet_gate_mix<T: Scalar>(
    tape: &mut Tape<T>,
    x: NodeId,
    grid: Grid,
    gates: [NodeId; 4],
) -> Result<NodeId> {
    if grid.h % 2 != 0 || grid.w % 2 != 0 {
        return Err(Error::shape(format!(
            "wavelet gating requires an even grid, got {}x{}",
            grid.h, grid.w
        )));
    }
    let g = to_grid(tape, x, grid)?;
    let bands = tape.haar_dwt2(g)?;
    let (h2, w2) = (grid.h / 2, grid.w / 2);
    let c = *tape.real(x)?.shape().last().unwrap();
    let mut stacked = Vec::with_capacity(4);
    for gate in gates {
        stacked.push(tape.reshape(gate, &[1, h2, w2, c])?);
    }
    let gate_tensor = tape.concat0(&stacked)?;
    let gated = tape.mul(bands, gate_tensor)?;
    let back = tape.haar_idwt2(gated)?;
    to_tokens(tape, back, grid)
}

/// Multi-head self-attention over one token matrix `[N, C]`:
/// softmax(Q K^T / sqrt(C/heads)) V per head, heads concatenated, projected.
pub fn attention_mix<T: Scalar>(
    tape: &mut Tape<T>,
    x: NodeId,
    heads: usize,
    w_qkv: NodeId,
    b_qkv: NodeId,
    w_proj: NodeId,
    b_proj: NodeId,
) -> Result<NodeId> {
    let shape = tape.real(x)?.shape().to_vec();
    if shape.len() != 2 {
        return Err(Error::shape(format!("attention expects [N, C], got {shape:?}")));
    }
    let (n, c) = (shape[0], shape[1]);
    if heads == 0 || c % heads != 0 {
        return Err(Error::shape(format!(
            "channels {c} not divisible by heads {heads}"
        )));
    }
    let qkv = linear(tape, x, w_qkv, b_qkv)?;
    let merged = tape.mhsa(qkv, 1, n, heads)?;
    linear(tape, merged, w_proj, b_proj)
}

/// Batched attention over `[B*N, C]` tokens: one QKV projection, the fused
/// per-(element, head) attention kernel, one output projection.
pub fn attention_mix_batched<T: Scalar>(
    tape: &mut Tape<T>,
    x: NodeId,
    batch: usize,
    tokens: usize,
    heads: usize,
    store: &ParamStore<T>,
    prefix: &str,
) -> Result<NodeId> {
    let qkv = linear_named(tape, store, x, &format!("{prefix}.qkv"))?;
    let merged = tape.mhsa(qkv, batch, tokens, heads)?;
    linear_named(tape, store, merged, &format!("{prefix}.proj"))
}

/// Pre-norm residual block: u = x + Mixer(LN1(x)); y = u + MLP(LN2(u)).
/// The same wiring serves spectral and attention blocks.
pub fn residual_block<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    x: NodeId,
    prefix: &str,
    mixer: impl FnOnce(&mut Tape<T>, NodeId) -> Result<NodeId>,
) -> Result<NodeId> {
    let normed = layer_norm_named(tape, store, x, &format!("{prefix}.norm1"))?;
    let mixed = mixer(tape, normed)?;
    let u = tape.add(x, mixed)?;
    let normed2 = layer_norm_named(tape, store, u, &format!("{prefix}.norm2"))?;
    let expanded = mlp(tape, store, normed2, &format!("{prefix}.mlp"))?;
    tape.add(u, expanded)
}

/// Stage merge: per-grid 2x2 concatenation (4 C_in), linear projection to
/// C_out, layer norm. Tokens `[N, C_in]` -> `[N/4, C_out]` for one element.
pub fn downsample_merge<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    x: NodeId,
    grid: Grid,
    prefix: &str,
) -> Result<NodeId> {
    if grid.h % 2 != 0 || grid.w % 2 != 0 {
        return Err(Error::shape(format!(
            "merge requires even grid dims, got {}x{}",
            grid.h, grid.w
        )));
    }
    let g = to_grid(tape, x, grid)?;
    let packed = tape.space_to_depth2(g)?;
    let c4 = *tape.real(packed)?.shape().last().unwrap();
    let flat = tape.reshape(packed, &[grid.tokens() / 4, c4])?;
    let projected = linear_named(tape, store, flat, prefix)?;
    layer_norm_named(tape, store, projected, &format!("{prefix}.norm"))
}

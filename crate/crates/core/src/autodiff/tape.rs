//! Reverse-mode automatic differentiation over the fixed operation set the
//! transformer blocks need. Values are computed eagerly as operations are
//! recorded; a single backward sweep visits each node once, in reverse
//! recording order, so gradients are bit-deterministic.

use std::collections::HashMap;

use crate::autodiff::params::ParamStore;
use crate::error::{Error, Result};
use crate::numerics::complex::Spectrum;
use crate::numerics::fft;
use crate::numerics::scalar::Scalar;
use crate::numerics::spatial;
use crate::numerics::tensor::{axpy, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

/// Node payload: real tensors everywhere except the spectral-space nodes.
#[derive(Clone, Debug)]
pub enum Value<T: Scalar> {
    Real(Tensor<T>),
    Spec(Spectrum<T>),
}

impl<T: Scalar> Value<T> {
    fn as_real(&self) -> Result<&Tensor<T>> {
        match self {
            Value::Real(t) => Ok(t),
            Value::Spec(_) => Err(Error::shape("expected real value, found spectrum")),
        }
    }
    fn as_spec(&self) -> Result<&Spectrum<T>> {
        match self {
            Value::Spec(s) => Ok(s),
            Value::Real(_) => Err(Error::shape("expected spectrum, found real value")),
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf { param: Option<(String, bool)> },
    Add { a: NodeId, b: NodeId },
    Scale { a: NodeId },
    Mul { a: NodeId, b: NodeId },
    MatMul { a: NodeId, b: NodeId },
    Transpose { a: NodeId },
    Reshape { a: NodeId },
    Slice2 { a: NodeId, r0: usize, c0: usize },
    Concat0 { parts: Vec<NodeId> },
    ConcatCols { parts: Vec<NodeId> },
    LayerNorm { a: NodeId, scale: NodeId, shift: NodeId },
    Softmax { a: NodeId },
    Gelu { a: NodeId },
    Sum { a: NodeId },
    Mean { a: NodeId },
    Rfft2 { a: NodeId },
    Irfft2 { a: NodeId },
    Fft2Real { a: NodeId },
    GateMul { spec: NodeId, k_re: NodeId, k_im: NodeId },
    ModeMix { spec: NodeId, w_re: NodeId, w_im: NodeId, modes_h: usize, modes_w: usize },
    HaarDwt2 { a: NodeId },
    HaarIdwt2 { a: NodeId },
    SpaceToDepth2 { a: NodeId },
    CrossEntropy { logits: NodeId, labels: Vec<usize> },
    // fused fast paths; semantically equal to compositions of the ops above
    Mhsa { qkv: NodeId, batch: usize, tokens: usize, heads: usize },
    SpectralGate { x: NodeId, k_re: NodeId, k_im: NodeId, batch: usize, grid_h: usize, grid_w: usize },
}

/// Saved activations a VJP needs beyond the node's own value.
#[derive(Clone, Debug)]
enum Aux<T: Scalar> {
    None,
    Scale { factor: T },
    LayerNorm { xhat: Tensor<T>, inv_std: Vec<T> },
    CrossEntropy { probs: Tensor<T>, smoothing: f64 },
    /// Per-(batch, head) softmax matrices, each N x N row-major.
    Mhsa { attn: Vec<T> },
    /// Per-batch-element forward spectra of the gated input.
    SpectralGate { spectra: Vec<Spectrum<T>> },
}

struct Node<T: Scalar> {
    op: Op,
    value: Value<T>,
    aux: Aux<T>,
}

/// Gradients keyed by parameter name, in first-use recording order.
#[derive(Clone, Debug)]
pub struct Gradients<T: Scalar> {
    order: Vec<String>,
    map: HashMap<String, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    fn new() -> Self {
        Gradients {
            order: Vec::new(),
            map: HashMap::new(),
        }
    }

    fn accumulate(&mut self, name: &str, g: &Tensor<T>) {
        if let Some(existing) = self.map.get_mut(name) {
            axpy(T::ONE, g.data(), existing.data_mut());
        } else {
            self.order.push(name.to_string());
            self.map.insert(name.to_string(), g.clone());
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.map.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.order
            .iter()
            .map(move |n| (n.as_str(), self.map.get(n).unwrap()))
    }
}

const GELU_A: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_B: f64 = 0.044_715;
pub const LAYER_NORM_EPS: f64 = 1e-6;

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Value<T>, aux: Aux<T>) -> NodeId {
        self.nodes.push(Node { op, value, aux });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Value<T> {
        &self.nodes[id.0].value
    }

    pub fn real(&self, id: NodeId) -> Result<&Tensor<T>> {
        self.nodes[id.0].value.as_real()
    }

    pub fn spec(&self, id: NodeId) -> Result<&Spectrum<T>> {
        self.nodes[id.0].value.as_spec()
    }

    /// Scalar value of a rank-1 single-element node.
    pub fn scalar(&self, id: NodeId) -> Result<T> {
        let t = self.real(id)?;
        if t.numel() != 1 {
            return Err(Error::shape(format!(
                "expected scalar node, got shape {:?}",
                t.shape()
            )));
        }
        Ok(t.data()[0])
    }

    /// Non-trainable input leaf.
    pub fn input(&mut self, t: Tensor<T>) -> NodeId {
        self.push(Op::Leaf { param: None }, Value::Real(t), Aux::None)
    }

    /// Parameter leaf; gradients accumulate under the parameter's name.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<NodeId> {
        let tensor = store
            .get(name)
            .ok_or_else(|| Error::config(format!("unknown parameter {name:?}")))?
            .clone();
        let trainable = store.trainable(name).unwrap_or(false);
        Ok(self.push(
            Op::Leaf {
                param: Some((name.to_string(), trainable)),
            },
            Value::Real(tensor),
            Aux::None,
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.real(a)?, self.real(b)?);
        let out = ta.add_broadcast(tb)?;
        Ok(self.push(Op::Add { a, b }, Value::Real(out), Aux::None))
    }

    pub fn scale(&mut self, a: NodeId, factor: T) -> Result<NodeId> {
        let out = self.real(a)?.scale(factor);
        Ok(self.push(Op::Scale { a }, Value::Real(out), Aux::Scale { factor }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.real(a)?.mul_elem(self.real(b)?)?;
        Ok(self.push(Op::Mul { a, b }, Value::Real(out), Aux::None))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.real(a)?.matmul(self.real(b)?)?;
        Ok(self.push(Op::MatMul { a, b }, Value::Real(out), Aux::None))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.real(a)?.transpose2()?;
        Ok(self.push(Op::Transpose { a }, Value::Real(out), Aux::None))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let out = self.real(a)?.reshape(shape)?;
        Ok(self.push(Op::Reshape { a }, Value::Real(out), Aux::None))
    }

    pub fn slice2(&mut self, a: NodeId, r0: usize, r1: usize, c0: usize, c1: usize) -> Result<NodeId> {
        let out = self.real(a)?.slice2(r0, r1, c0, c1)?;
        Ok(self.push(Op::Slice2 { a, r0, c0 }, Value::Real(out), Aux::None))
    }

    /// Concatenate along axis 0; parts must agree on trailing dims.
    pub fn concat0(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::shape("concat0 of zero parts"));
        }
        let first = self.real(parts[0])?.shape().to_vec();
        let mut rows = 0usize;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.real(p)?;
            if t.shape()[1..] != first[1..] {
                return Err(Error::shape(format!(
                    "concat0: trailing dims differ, {:?} vs {:?}",
                    t.shape(),
                    first
                )));
            }
            rows += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let mut shape = first;
        shape[0] = rows;
        let out = Tensor::from_vec(&shape, data)?;
        Ok(self.push(
            Op::Concat0 {
                parts: parts.to_vec(),
            },
            Value::Real(out),
            Aux::None,
        ))
    }

    /// Concatenate rank-2 tensors along the column axis.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols of zero parts"));
        }
        let rows = self.real(parts[0])?.shape()[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.real(p)?;
            if t.rank() != 2 || t.shape()[0] != rows {
                return Err(Error::shape(format!(
                    "concat_cols: incompatible shape {:?}",
                    t.shape()
                )));
            }
            widths.push(t.shape()[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = Tensor::zeros(&[rows, total]);
        let mut col = 0;
        for (&p, &w) in parts.iter().zip(widths.iter()) {
            let t = self.real(p)?;
            for r in 0..rows {
                out.data_mut()[r * total + col..r * total + col + w]
                    .copy_from_slice(&t.data()[r * w..(r + 1) * w]);
            }
            col += w;
        }
        Ok(self.push(
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            Value::Real(out),
            Aux::None,
        ))
    }

    /// Layer normalization over the last axis with learnable scale/shift.
    pub fn layer_norm(&mut self, a: NodeId, scale: NodeId, shift: NodeId) -> Result<NodeId> {
        let x = self.real(a)?;
        let gamma = self.real(scale)?;
        let beta = self.real(shift)?;
        let c = *x.shape().last().unwrap();
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(Error::shape(format!(
                "layer_norm: scale/shift must be [{c}], got {:?}/{:?}",
                gamma.shape(),
                beta.shape()
            )));
        }
        let rows = x.numel() / c;
        let mut out = Tensor::zeros(x.shape());
        let mut xhat = Tensor::zeros(x.shape());
        let mut inv_std = vec![T::ZERO; rows];
        let inv_c = T::from_f64(1.0 / c as f64);
        let eps = T::from_f64(LAYER_NORM_EPS);
        for r in 0..rows {
            let row = &x.data()[r * c..(r + 1) * c];
            let mut mean = T::ZERO;
            for &v in row {
                mean += v;
            }
            mean *= inv_c;
            let mut var = T::ZERO;
            for &v in row {
                let d = v - mean;
                var += d * d;
            }
            var *= inv_c;
            let inv = T::ONE / (var + eps).sqrt();
            inv_std[r] = inv;
            for i in 0..c {
                let h = (row[i] - mean) * inv;
                xhat.data_mut()[r * c + i] = h;
                out.data_mut()[r * c + i] = h * gamma.data()[i] + beta.data()[i];
            }
        }
        Ok(self.push(
            Op::LayerNorm { a, scale, shift },
            Value::Real(out),
            Aux::LayerNorm { xhat, inv_std },
        ))
    }

    /// Softmax over the last axis (max-subtracted).
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let x = self.real(a)?;
        let c = *x.shape().last().unwrap();
        let rows = x.numel() / c;
        let mut out = Tensor::zeros(x.shape());
        for r in 0..rows {
            let row = &x.data()[r * c..(r + 1) * c];
            let mut m = row[0];
            for &v in row {
                m = m.maximum(v);
            }
            let mut denom = T::ZERO;
            for i in 0..c {
                let e = (row[i] - m).act_exp();
                out.data_mut()[r * c + i] = e;
                denom += e;
            }
            let inv = T::ONE / denom;
            for i in 0..c {
                out.data_mut()[r * c + i] *= inv;
            }
        }
        Ok(self.push(Op::Softmax { a }, Value::Real(out), Aux::None))
    }

    /// GELU with the tanh approximation:
    /// 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        let ca = T::from_f64(GELU_A);
        let cb = T::from_f64(GELU_B);
        let half = T::from_f64(0.5);
        let out = self.real(a)?.map(|x| {
            let u = ca * (x + cb * x * x * x);
            half * x * (T::ONE + u.act_tanh())
        });
        Ok(self.push(Op::Gelu { a }, Value::Real(out), Aux::None))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.real(a)?.sum();
        Ok(self.push(Op::Sum { a }, Value::Real(Tensor::scalar(s)), Aux::None))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.real(a)?;
        let s = t.sum() * T::from_f64(1.0 / t.numel() as f64);
        Ok(self.push(Op::Mean { a }, Value::Real(Tensor::scalar(s)), Aux::None))
    }

    pub fn rfft2(&mut self, a: NodeId) -> Result<NodeId> {
        let spec = fft::rfft2(self.real(a)?)?;
        Ok(self.push(Op::Rfft2 { a }, Value::Spec(spec), Aux::None))
    }

    pub fn irfft2(&mut self, a: NodeId) -> Result<NodeId> {
        let grid = fft::irfft2(self.spec(a)?)?;
        Ok(self.push(Op::Irfft2 { a }, Value::Real(grid), Aux::None))
    }

    /// Real part of the full forward 2-D FFT (gate-free Fourier mixing).
    pub fn fft2_real(&mut self, a: NodeId) -> Result<NodeId> {
        let out = fft::fft2_real(self.real(a)?)?;
        Ok(self.push(Op::Fft2Real { a }, Value::Real(out), Aux::None))
    }

    /// Per-frequency, per-channel complex gate K = k_re + i k_im applied to
    /// a half spectrum. The gate is a pair of real tensors with the same
    /// shape as the stored coefficients.
    pub fn gate_mul(&mut self, spec: NodeId, k_re: NodeId, k_im: NodeId) -> Result<NodeId> {
        let s = self.spec(spec)?;
        let (re, im) = (self.real(k_re)?, self.real(k_im)?);
        let expect = s.coeffs.shape();
        if re.shape() != expect || im.shape() != expect {
            return Err(Error::shape(format!(
                "gate shape {:?}/{:?} does not match spectrum {:?}",
                re.shape(),
                im.shape(),
                expect
            )));
        }
        let mut out = s.clone();
        for i in 0..out.coeffs.numel() {
            let (xr, xi) = (s.coeffs.re[i], s.coeffs.im[i]);
            let (kr, ki) = (re.data()[i], im.data()[i]);
            out.coeffs.re[i] = kr * xr - ki * xi;
            out.coeffs.im[i] = kr * xi + ki * xr;
        }
        Ok(self.push(
            Op::GateMul { spec, k_re, k_im },
            Value::Spec(out),
            Aux::None,
        ))
    }

    /// Per-mode complex channel mixing on retained low frequencies
    /// (rows < modes_h, stored cols < modes_w); all other modes zeroed.
    /// Weights are [modes_h, modes_w, C, C] pairs, y_i = sum_j W_ij x_j.
    pub fn mode_mix(
        &mut self,
        spec: NodeId,
        w_re: NodeId,
        w_im: NodeId,
        modes_h: usize,
        modes_w: usize,
    ) -> Result<NodeId> {
        let s = self.spec(spec)?;
        let c = s.channels;
        let wh = s.w_half();
        if modes_h > s.grid_h || modes_w > wh {
            return Err(Error::shape(format!(
                "modes {modes_h}x{modes_w} exceed spectrum {}x{wh}",
                s.grid_h
            )));
        }
        let expect = [modes_h, modes_w, c, c];
        let (wre, wim) = (self.real(w_re)?, self.real(w_im)?);
        if wre.shape() != expect || wim.shape() != expect {
            return Err(Error::shape(format!(
                "mode weights {:?}/{:?}, expect {expect:?}",
                wre.shape(),
                wim.shape()
            )));
        }
        let mut out = Spectrum::zeros(s.grid_h, s.grid_w, c);
        for fh in 0..modes_h {
            for fw in 0..modes_w {
                let wbase = (fh * modes_w + fw) * c * c;
                let sbase = (fh * wh + fw) * c;
                for i in 0..c {
                    let mut yr = T::ZERO;
                    let mut yi = T::ZERO;
                    for j in 0..c {
                        let (wr, wi) = (wre.data()[wbase + i * c + j], wim.data()[wbase + i * c + j]);
                        let (xr, xi) = (s.coeffs.re[sbase + j], s.coeffs.im[sbase + j]);
                        yr += wr * xr - wi * xi;
                        yi += wr * xi + wi * xr;
                    }
                    out.coeffs.re[sbase + i] = yr;
                    out.coeffs.im[sbase + i] = yi;
                }
            }
        }
        Ok(self.push(
            Op::ModeMix {
                spec,
                w_re,
                w_im,
                modes_h,
                modes_w,
            },
            Value::Spec(out),
            Aux::None,
        ))
    }

    pub fn haar_dwt2(&mut self, a: NodeId) -> Result<NodeId> {
        let out = spatial::haar_dwt2(self.real(a)?)?;
        Ok(self.push(Op::HaarDwt2 { a }, Value::Real(out), Aux::None))
    }

    pub fn haar_idwt2(&mut self, a: NodeId) -> Result<NodeId> {
        let out = spatial::haar_idwt2(self.real(a)?)?;
        Ok(self.push(Op::HaarIdwt2 { a }, Value::Real(out), Aux::None))
    }

    pub fn space_to_depth2(&mut self, a: NodeId) -> Result<NodeId> {
        let out = spatial::space_to_depth2(self.real(a)?)?;
        Ok(self.push(Op::SpaceToDepth2 { a }, Value::Real(out), Aux::None))
    }

    /// Mean over the batch of label-smoothed cross entropy:
    /// -sum_k q_k log softmax(logits)_k with q = (1-eps) onehot + eps/K.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize], smoothing: f64) -> Result<NodeId> {
        let x = self.real(logits)?;
        if x.rank() != 2 {
            return Err(Error::shape(format!(
                "cross_entropy expects [B, K] logits, got {:?}",
                x.shape()
            )));
        }
        let (b, k) = (x.shape()[0], x.shape()[1]);
        if labels.len() != b {
            return Err(Error::shape(format!(
                "{} labels for batch of {b}",
                labels.len()
            )));
        }
        if !(0.0..1.0).contains(&smoothing) {
            return Err(Error::config(format!("smoothing {smoothing} outside [0, 1)")));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::data(format!("label {bad} out of range for {k} classes")));
        }
        let mut probs = Tensor::zeros(&[b, k]);
        let mut total = T::ZERO;
        let off = T::from_f64(smoothing / k as f64);
        let on = T::from_f64(1.0 - smoothing);
        for r in 0..b {
            let row = &x.data()[r * k..(r + 1) * k];
            let mut m = row[0];
            for &v in row {
                m = m.maximum(v);
            }
            let mut denom = T::ZERO;
            for &v in row {
                denom += (v - m).act_exp();
            }
            let lse = m + denom.ln();
            let inv = T::ONE / denom;
            let mut loss_r = T::ZERO;
            for i in 0..k {
                probs.data_mut()[r * k + i] = (row[i] - m).act_exp() * inv;
                let mut q = off;
                if i == labels[r] {
                    q += on;
                }
                loss_r += q * (lse - row[i]);
            }
            total += loss_r;
        }
        let value = total * T::from_f64(1.0 / b as f64);
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
            },
            Value::Real(Tensor::scalar(value)),
            Aux::CrossEntropy { probs, smoothing },
        ))
    }

    /// Fused batched multi-head self-attention over a projected
    /// `[B*N, 3C]` QKV matrix: per (batch element, head),
    /// softmax(Q K^T / sqrt(C/heads)) V, heads concatenated back to
    /// `[B*N, C]`. Equal to the slice/matmul/softmax composition, kept as
    /// one node so the inner loops run on contiguous scratch buffers.
    pub fn mhsa(&mut self, qkv: NodeId, batch: usize, tokens: usize, heads: usize) -> Result<NodeId> {
        let q3 = self.real(qkv)?;
        let shape = q3.shape().to_vec();
        if shape.len() != 2 || shape[0] != batch * tokens || shape[1] % 3 != 0 {
            return Err(Error::shape(format!(
                "mhsa expects [{batch}*{tokens}, 3C], got {shape:?}"
            )));
        }
        let c = shape[1] / 3;
        if heads == 0 || c % heads != 0 {
            return Err(Error::shape(format!(
                "channels {c} not divisible by heads {heads}"
            )));
        }
        let dh = c / heads;
        let n = tokens;
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        let src = q3.data();
        let cols = 3 * c;
        let mut out = Tensor::zeros(&[batch * n, c]);
        let mut attn_all = vec![T::ZERO; batch * heads * n * n];
        let mut q = vec![T::ZERO; n * dh];
        let mut k = vec![T::ZERO; n * dh];
        let mut v = vec![T::ZERO; n * dh];
        let mut scores = vec![T::ZERO; n * n];
        let mut head_out = vec![T::ZERO; n * dh];
        for b in 0..batch {
            for h in 0..heads {
                for t in 0..n {
                    let row = (b * n + t) * cols;
                    q[t * dh..(t + 1) * dh]
                        .copy_from_slice(&src[row + h * dh..row + (h + 1) * dh]);
                    k[t * dh..(t + 1) * dh]
                        .copy_from_slice(&src[row + c + h * dh..row + c + (h + 1) * dh]);
                    v[t * dh..(t + 1) * dh]
                        .copy_from_slice(&src[row + 2 * c + h * dh..row + 2 * c + (h + 1) * dh]);
                }
                // scores = scale * q k^T, softmax over rows
                for i in 0..n {
                    let qi = &q[i * dh..(i + 1) * dh];
                    for j in 0..n {
                        let kj = &k[j * dh..(j + 1) * dh];
                        let mut acc = T::ZERO;
                        for d in 0..dh {
                            acc += qi[d] * kj[d];
                        }
                        scores[i * n + j] = acc * scale;
                    }
                }
                for i in 0..n {
                    let row = &mut scores[i * n..(i + 1) * n];
                    let mut m = row[0];
                    for &s in row.iter() {
                        m = m.maximum(s);
                    }
                    let mut denom = T::ZERO;
                    for s in row.iter_mut() {
                        *s = (*s - m).act_exp();
                        denom += *s;
                    }
                    let inv = T::ONE / denom;
                    for s in row.iter_mut() {
                        *s *= inv;
                    }
                }
                attn_all[(b * heads + h) * n * n..(b * heads + h + 1) * n * n]
                    .copy_from_slice(&scores);
                crate::numerics::tensor::matmul_into(&scores, &v, n, n, dh, &mut head_out);
                for t in 0..n {
                    out.data_mut()[(b * n + t) * c + h * dh..(b * n + t) * c + (h + 1) * dh]
                        .copy_from_slice(&head_out[t * dh..(t + 1) * dh]);
                }
            }
        }
        Ok(self.push(
            Op::Mhsa {
                qkv,
                batch,
                tokens,
                heads,
            },
            Value::Real(out),
            Aux::Mhsa { attn: attn_all },
        ))
    }

    /// Fused batched FGN gate sub-step over `[B*N, C]` tokens rastered as
    /// `grid_h x grid_w`: irfft2(K (.) rfft2(x)) per batch element, with
    /// the complex gate given as paired real tensors.
    pub fn spectral_gate(
        &mut self,
        x: NodeId,
        k_re: NodeId,
        k_im: NodeId,
        batch: usize,
        grid_h: usize,
        grid_w: usize,
    ) -> Result<NodeId> {
        let xt = self.real(x)?;
        let shape = xt.shape().to_vec();
        if shape.len() != 2 || shape[0] != batch * grid_h * grid_w {
            return Err(Error::shape(format!(
                "spectral_gate expects [{batch}*{grid_h}*{grid_w}, C], got {shape:?}"
            )));
        }
        let c = shape[1];
        let wh = grid_w / 2 + 1;
        let (re, im) = (self.real(k_re)?, self.real(k_im)?);
        if re.shape() != [grid_h, wh, c] || im.shape() != [grid_h, wh, c] {
            return Err(Error::shape(format!(
                "gate shape {:?}/{:?} does not match grid {grid_h}x{grid_w}x{c}",
                re.shape(),
                im.shape()
            )));
        }
        let n = grid_h * grid_w;
        let mut out = Tensor::zeros(&shape);
        let mut spectra = Vec::with_capacity(batch);
        for b in 0..batch {
            let el = Tensor::from_vec(
                &[grid_h, grid_w, c],
                xt.data()[b * n * c..(b + 1) * n * c].to_vec(),
            )?;
            let spec = fft::rfft2(&el)?;
            let mut gated = spec.clone();
            for i in 0..gated.coeffs.numel() {
                let (xr, xi) = (spec.coeffs.re[i], spec.coeffs.im[i]);
                let (kr, ki) = (re.data()[i], im.data()[i]);
                gated.coeffs.re[i] = kr * xr - ki * xi;
                gated.coeffs.im[i] = kr * xi + ki * xr;
            }
            let back = fft::irfft2(&gated)?;
            out.data_mut()[b * n * c..(b + 1) * n * c].copy_from_slice(back.data());
            spectra.push(spec);
        }
        Ok(self.push(
            Op::SpectralGate {
                x,
                k_re,
                k_im,
                batch,
                grid_h,
                grid_w,
            },
            Value::Real(out),
            Aux::SpectralGate { spectra },
        ))
    }

    /// Reverse sweep from a scalar loss node; returns gradients for every
    /// trainable parameter leaf reachable from it.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let loss_val = self.real(loss)?;
        if loss_val.numel() != 1 {
            return Err(Error::shape(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss_val.shape()
            )));
        }
        let mut adjoints: Vec<Option<Value<T>>> = (0..=loss.0).map(|_| None).collect();
        adjoints[loss.0] = Some(Value::Real(Tensor::scalar(T::ONE)));
        let mut grads = Gradients::new();

        for id in (0..=loss.0).rev() {
            let Some(gval) = adjoints[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            match (&node.op, &gval) {
                (Op::Leaf { param }, Value::Real(g)) => {
                    if let Some((name, trainable)) = param {
                        if *trainable {
                            grads.accumulate(name, g);
                        }
                    }
                }
                (Op::Leaf { .. }, Value::Spec(_)) => {
                    return Err(Error::shape("spectrum adjoint reached a leaf"));
                }
                (Op::Add { a, b }, Value::Real(g)) => {
                    acc_real(&mut adjoints, *a, g.clone());
                    let tb = self.real(*b)?;
                    if tb.shape() == g.shape() {
                        acc_real(&mut adjoints, *b, g.clone());
                    } else {
                        acc_real(&mut adjoints, *b, g.reduce_to_suffix(tb.shape())?);
                    }
                }
                (Op::Scale { a }, Value::Real(g)) => {
                    let factor = match node.aux {
                        Aux::Scale { factor } => factor,
                        _ => unreachable!("scale node without factor"),
                    };
                    acc_real(&mut adjoints, *a, g.scale(factor));
                }
                (Op::Mul { a, b }, Value::Real(g)) => {
                    acc_real(&mut adjoints, *a, g.mul_elem(self.real(*b)?)?);
                    acc_real(&mut adjoints, *b, g.mul_elem(self.real(*a)?)?);
                }
                (Op::MatMul { a, b }, Value::Real(g)) => {
                    let bt = self.real(*b)?.transpose2()?;
                    acc_real(&mut adjoints, *a, g.matmul(&bt)?);
                    let at = self.real(*a)?.transpose2()?;
                    acc_real(&mut adjoints, *b, at.matmul(g)?);
                }
                (Op::Transpose { a }, Value::Real(g)) => {
                    acc_real(&mut adjoints, *a, g.transpose2()?);
                }
                (Op::Reshape { a }, Value::Real(g)) => {
                    let shape = self.real(*a)?.shape().to_vec();
                    acc_real(&mut adjoints, *a, g.reshape(&shape)?);
                }
                (Op::Slice2 { a, r0, c0 }, Value::Real(g)) => {
                    let src_shape = self.real(*a)?.shape().to_vec();
                    let mut scat = Tensor::zeros(&src_shape);
                    let (gr, gc) = (g.shape()[0], g.shape()[1]);
                    let n = src_shape[1];
                    for r in 0..gr {
                        let dst = &mut scat.data_mut()[(r0 + r) * n + c0..(r0 + r) * n + c0 + gc];
                        axpy(T::ONE, &g.data()[r * gc..(r + 1) * gc], dst);
                    }
                    acc_real(&mut adjoints, *a, scat);
                }
                (Op::Concat0 { parts }, Value::Real(g)) => {
                    let mut row = 0usize;
                    let cols: usize = g.shape()[1..].iter().product();
                    for &p in parts {
                        let shape = self.real(p)?.shape().to_vec();
                        let rows = shape[0];
                        let chunk = g.data()[row * cols..(row + rows) * cols].to_vec();
                        acc_real(&mut adjoints, p, Tensor::from_vec(&shape, chunk)?);
                        row += rows;
                    }
                }
                (Op::ConcatCols { parts }, Value::Real(g)) => {
                    let rows = g.shape()[0];
                    let total = g.shape()[1];
                    let mut col = 0usize;
                    for &p in parts {
                        let w = self.real(p)?.shape()[1];
                        let mut part = Tensor::zeros(&[rows, w]);
                        for r in 0..rows {
                            part.data_mut()[r * w..(r + 1) * w]
                                .copy_from_slice(&g.data()[r * total + col..r * total + col + w]);
                        }
                        acc_real(&mut adjoints, p, part);
                        col += w;
                    }
                }
                (Op::LayerNorm { a, scale, shift }, Value::Real(g)) => {
                    let (xhat, inv_std) = match &node.aux {
                        Aux::LayerNorm { xhat, inv_std } => (xhat, inv_std),
                        _ => unreachable!("layer_norm node without saved activations"),
                    };
                    let gamma = self.real(*scale)?;
                    let c = gamma.numel();
                    let rows = xhat.numel() / c;
                    let mut dgamma = Tensor::zeros(&[c]);
                    let mut dbeta = Tensor::zeros(&[c]);
                    let mut dx = Tensor::zeros(xhat.shape());
                    let inv_c = T::from_f64(1.0 / c as f64);
                    for r in 0..rows {
                        let grow = &g.data()[r * c..(r + 1) * c];
                        let hrow = &xhat.data()[r * c..(r + 1) * c];
                        let mut mean_gg = T::ZERO;
                        let mut mean_ggh = T::ZERO;
                        for i in 0..c {
                            let gg = grow[i] * gamma.data()[i];
                            mean_gg += gg;
                            mean_ggh += gg * hrow[i];
                            dgamma.data_mut()[i] += grow[i] * hrow[i];
                            dbeta.data_mut()[i] += grow[i];
                        }
                        mean_gg *= inv_c;
                        mean_ggh *= inv_c;
                        let inv = inv_std[r];
                        for i in 0..c {
                            let gg = grow[i] * gamma.data()[i];
                            dx.data_mut()[r * c + i] = inv * (gg - mean_gg - hrow[i] * mean_ggh);
                        }
                    }
                    acc_real(&mut adjoints, *a, dx);
                    acc_real(&mut adjoints, *scale, dgamma);
                    acc_real(&mut adjoints, *shift, dbeta);
                }
                (Op::Softmax { a }, Value::Real(g)) => {
                    let y = node.value.as_real()?;
                    let c = *y.shape().last().unwrap();
                    let rows = y.numel() / c;
                    let mut dx = Tensor::zeros(y.shape());
                    for r in 0..rows {
                        let yrow = &y.data()[r * c..(r + 1) * c];
                        let grow = &g.data()[r * c..(r + 1) * c];
                        let mut dot = T::ZERO;
                        for i in 0..c {
                            dot += yrow[i] * grow[i];
                        }
                        for i in 0..c {
                            dx.data_mut()[r * c + i] = yrow[i] * (grow[i] - dot);
                        }
                    }
                    acc_real(&mut adjoints, *a, dx);
                }
                (Op::Gelu { a }, Value::Real(g)) => {
                    let x = self.real(*a)?;
                    let ca = T::from_f64(GELU_A);
                    let cb3 = T::from_f64(3.0 * GELU_B);
                    let cb = T::from_f64(GELU_B);
                    let half = T::from_f64(0.5);
                    let mut dx = Tensor::zeros(x.shape());
                    for (i, &v) in x.data().iter().enumerate() {
                        let u = ca * (v + cb * v * v * v);
                        let t = u.act_tanh();
                        let sech2 = T::ONE - t * t;
                        let du = ca * (T::ONE + cb3 * v * v);
                        let d = half * (T::ONE + t) + half * v * sech2 * du;
                        dx.data_mut()[i] = g.data()[i] * d;
                    }
                    acc_real(&mut adjoints, *a, dx);
                }
                (Op::Sum { a }, Value::Real(g)) => {
                    let shape = self.real(*a)?.shape().to_vec();
                    acc_real(&mut adjoints, *a, Tensor::filled(&shape, g.data()[0]));
                }
                (Op::Mean { a }, Value::Real(g)) => {
                    let t = self.real(*a)?;
                    let v = g.data()[0] * T::from_f64(1.0 / t.numel() as f64);
                    acc_real(&mut adjoints, *a, Tensor::filled(t.shape(), v));
                }
                (Op::Rfft2 { a }, Value::Spec(g)) => {
                    acc_real(&mut adjoints, *a, fft::rfft2_adjoint(g)?);
                }
                (Op::Irfft2 { a }, Value::Real(g)) => {
                    acc_spec(&mut adjoints, *a, fft::irfft2_adjoint(g)?);
                }
                (Op::Fft2Real { a }, Value::Real(g)) => {
                    acc_real(&mut adjoints, *a, fft::fft2_real(g)?);
                }
                (Op::GateMul { spec, k_re, k_im }, Value::Spec(g)) => {
                    let x = self.spec(*spec)?;
                    let (kr, ki) = (self.real(*k_re)?, self.real(*k_im)?);
                    let n = x.coeffs.numel();
                    let mut dx = Spectrum::zeros(x.grid_h, x.grid_w, x.channels);
                    let mut dkr = Tensor::zeros(kr.shape());
                    let mut dki = Tensor::zeros(ki.shape());
                    for i in 0..n {
                        let (gr, gi) = (g.coeffs.re[i], g.coeffs.im[i]);
                        let (xr, xi) = (x.coeffs.re[i], x.coeffs.im[i]);
                        let (r, m) = (kr.data()[i], ki.data()[i]);
                        dx.coeffs.re[i] = r * gr + m * gi;
                        dx.coeffs.im[i] = -m * gr + r * gi;
                        dkr.data_mut()[i] = xr * gr + xi * gi;
                        dki.data_mut()[i] = -xi * gr + xr * gi;
                    }
                    acc_spec(&mut adjoints, *spec, dx);
                    acc_real(&mut adjoints, *k_re, dkr);
                    acc_real(&mut adjoints, *k_im, dki);
                }
                (
                    Op::ModeMix {
                        spec,
                        w_re,
                        w_im,
                        modes_h,
                        modes_w,
                    },
                    Value::Spec(g),
                ) => {
                    let x = self.spec(*spec)?;
                    let (wre, wim) = (self.real(*w_re)?, self.real(*w_im)?);
                    let c = x.channels;
                    let wh = x.w_half();
                    let mut dx = Spectrum::zeros(x.grid_h, x.grid_w, c);
                    let mut dwr = Tensor::zeros(wre.shape());
                    let mut dwi = Tensor::zeros(wim.shape());
                    for fh in 0..*modes_h {
                        for fw in 0..*modes_w {
                            let wbase = (fh * modes_w + fw) * c * c;
                            let sbase = (fh * wh + fw) * c;
                            for i in 0..c {
                                let (gr, gi) = (g.coeffs.re[sbase + i], g.coeffs.im[sbase + i]);
                                for j in 0..c {
                                    let (wr, wi) =
                                        (wre.data()[wbase + i * c + j], wim.data()[wbase + i * c + j]);
                                    let (xr, xi) = (x.coeffs.re[sbase + j], x.coeffs.im[sbase + j]);
                                    dx.coeffs.re[sbase + j] += wr * gr + wi * gi;
                                    dx.coeffs.im[sbase + j] += -wi * gr + wr * gi;
                                    dwr.data_mut()[wbase + i * c + j] += gr * xr + gi * xi;
                                    dwi.data_mut()[wbase + i * c + j] += -gr * xi + gi * xr;
                                }
                            }
                        }
                    }
                    acc_spec(&mut adjoints, *spec, dx);
                    acc_real(&mut adjoints, *w_re, dwr);
                    acc_real(&mut adjoints, *w_im, dwi);
                }
                (Op::HaarDwt2 { a }, Value::Real(g)) => {
                    acc_real(&mut adjoints, *a, spatial::haar_idwt2(g)?);
                }
                (Op::HaarIdwt2 { a }, Value::Real(g)) => {
                    acc_real(&mut adjoints, *a, spatial::haar_dwt2(g)?);
                }
                (Op::SpaceToDepth2 { a }, Value::Real(g)) => {
                    acc_real(&mut adjoints, *a, spatial::depth_to_space2(g)?);
                }
                (Op::CrossEntropy { logits, labels }, Value::Real(g)) => {
                    let (probs, smoothing) = match &node.aux {
                        Aux::CrossEntropy { probs, smoothing } => (probs, *smoothing),
                        _ => unreachable!("cross_entropy node without saved probs"),
                    };
                    let (b, k) = (probs.shape()[0], probs.shape()[1]);
                    let gscale = g.data()[0] * T::from_f64(1.0 / b as f64);
                    let off = T::from_f64(smoothing / k as f64);
                    let on = T::from_f64(1.0 - smoothing);
                    let mut dx = Tensor::zeros(&[b, k]);
                    for r in 0..b {
                        for i in 0..k {
                            let mut q = off;
                            if i == labels[r] {
                                q += on;
                            }
                            dx.data_mut()[r * k + i] = gscale * (probs.data()[r * k + i] - q);
                        }
                    }
                    acc_real(&mut adjoints, *logits, dx);
                }
                (
                    Op::Mhsa {
                        qkv,
                        batch,
                        tokens,
                        heads,
                    },
                    Value::Real(g),
                ) => {
                    let attn_all = match &node.aux {
                        Aux::Mhsa { attn } => attn,
                        _ => unreachable!("mhsa node without saved attention"),
                    };
                    let (batch, n, heads) = (*batch, *tokens, *heads);
                    let src = self.real(*qkv)?;
                    let cols = src.shape()[1];
                    let c = cols / 3;
                    let dh = c / heads;
                    let scale = T::from_f64(1.0 / (dh as f64).sqrt());
                    let mut dqkv = Tensor::zeros(&[batch * n, cols]);
                    let mut q = vec![T::ZERO; n * dh];
                    let mut k = vec![T::ZERO; n * dh];
                    let mut v = vec![T::ZERO; n * dh];
                    let mut go = vec![T::ZERO; n * dh];
                    let mut vt = vec![T::ZERO; dh * n];
                    let mut at = vec![T::ZERO; n * n];
                    let mut abar = vec![T::ZERO; n * n];
                    let mut sbar = vec![T::ZERO; n * n];
                    let mut dq = vec![T::ZERO; n * dh];
                    let mut dk = vec![T::ZERO; n * dh];
                    let mut dv = vec![T::ZERO; n * dh];
                    for b in 0..batch {
                        for h in 0..heads {
                            for t in 0..n {
                                let row = (b * n + t) * cols;
                                q[t * dh..(t + 1) * dh]
                                    .copy_from_slice(&src.data()[row + h * dh..row + (h + 1) * dh]);
                                k[t * dh..(t + 1) * dh].copy_from_slice(
                                    &src.data()[row + c + h * dh..row + c + (h + 1) * dh],
                                );
                                v[t * dh..(t + 1) * dh].copy_from_slice(
                                    &src.data()[row + 2 * c + h * dh..row + 2 * c + (h + 1) * dh],
                                );
                                go[t * dh..(t + 1) * dh].copy_from_slice(
                                    &g.data()[(b * n + t) * c + h * dh..(b * n + t) * c + (h + 1) * dh],
                                );
                            }
                            let attn = &attn_all[(b * heads + h) * n * n..(b * heads + h + 1) * n * n];
                            // dV = A^T dO
                            for i in 0..n {
                                for j in 0..n {
                                    at[j * n + i] = attn[i * n + j];
                                }
                            }
                            crate::numerics::tensor::matmul_into(&at, &go, n, n, dh, &mut dv);
                            // dA = dO V^T
                            for i in 0..n {
                                for d in 0..dh {
                                    vt[d * n + i] = v[i * dh + d];
                                }
                            }
                            crate::numerics::tensor::matmul_into(&go, &vt, n, dh, n, &mut abar);
                            // softmax rows, then the score scale
                            for i in 0..n {
                                let arow = &abar[i * n..(i + 1) * n];
                                let yrow = &attn[i * n..(i + 1) * n];
                                let mut dot = T::ZERO;
                                for j in 0..n {
                                    dot += arow[j] * yrow[j];
                                }
                                for j in 0..n {
                                    sbar[i * n + j] = yrow[j] * (arow[j] - dot) * scale;
                                }
                            }
                            // dQ = dS K, dK = dS^T Q
                            crate::numerics::tensor::matmul_into(&sbar, &k, n, n, dh, &mut dq);
                            for i in 0..n {
                                for j in 0..n {
                                    at[j * n + i] = sbar[i * n + j];
                                }
                            }
                            crate::numerics::tensor::matmul_into(&at, &q, n, n, dh, &mut dk);
                            for t in 0..n {
                                let row = (b * n + t) * cols;
                                axpy(T::ONE, &dq[t * dh..(t + 1) * dh], &mut dqkv.data_mut()[row + h * dh..row + (h + 1) * dh]);
                                axpy(T::ONE, &dk[t * dh..(t + 1) * dh], &mut dqkv.data_mut()[row + c + h * dh..row + c + (h + 1) * dh]);
                                axpy(T::ONE, &dv[t * dh..(t + 1) * dh], &mut dqkv.data_mut()[row + 2 * c + h * dh..row + 2 * c + (h + 1) * dh]);
                            }
                        }
                    }
                    acc_real(&mut adjoints, *qkv, dqkv);
                }
                (
                    Op::SpectralGate {
                        x,
                        k_re,
                        k_im,
                        batch,
                        grid_h,
                        grid_w,
                    },
                    Value::Real(g),
                ) => {
                    let spectra = match &node.aux {
                        Aux::SpectralGate { spectra } => spectra,
                        _ => unreachable!("spectral_gate node without saved spectra"),
                    };
                    let (batch, gh, gw) = (*batch, *grid_h, *grid_w);
                    let kr = self.real(*k_re)?;
                    let ki = self.real(*k_im)?;
                    let c = kr.shape()[2];
                    let n = gh * gw;
                    let mut dx = Tensor::zeros(&[batch * n, c]);
                    let mut dkr = Tensor::zeros(kr.shape());
                    let mut dki = Tensor::zeros(ki.shape());
                    for b in 0..batch {
                        let ybar = Tensor::from_vec(
                            &[gh, gw, c],
                            g.data()[b * n * c..(b + 1) * n * c].to_vec(),
                        )?;
                        let gbar = fft::irfft2_adjoint(&ybar)?;
                        let spec = &spectra[b];
                        let mut xbar_spec = Spectrum::zeros(gh, gw, c);
                        for i in 0..gbar.coeffs.numel() {
                            let (gr, gi) = (gbar.coeffs.re[i], gbar.coeffs.im[i]);
                            let (xr, xi) = (spec.coeffs.re[i], spec.coeffs.im[i]);
                            let (r, m) = (kr.data()[i], ki.data()[i]);
                            xbar_spec.coeffs.re[i] = r * gr + m * gi;
                            xbar_spec.coeffs.im[i] = -m * gr + r * gi;
                            dkr.data_mut()[i] += xr * gr + xi * gi;
                            dki.data_mut()[i] += -xi * gr + xr * gi;
                        }
                        let xbar = fft::rfft2_adjoint(&xbar_spec)?;
                        dx.data_mut()[b * n * c..(b + 1) * n * c].copy_from_slice(xbar.data());
                    }
                    acc_real(&mut adjoints, *x, dx);
                    acc_real(&mut adjoints, *k_re, dkr);
                    acc_real(&mut adjoints, *k_im, dki);
                }
                (op, _) => {
                    return Err(Error::shape(format!(
                        "adjoint value kind mismatch at node {id} ({op:?})"
                    )));
                }
            }
        }
        Ok(grads)
    }
}

fn acc_real<T: Scalar>(adjoints: &mut [Option<Value<T>>], id: NodeId, g: Tensor<T>) {
    match &mut adjoints[id.0] {
        slot @ None => *slot = Some(Value::Real(g)),
        Some(Value::Real(existing)) => axpy(T::ONE, g.data(), existing.data_mut()),
        Some(Value::Spec(_)) => unreachable!("mixed adjoint kinds at node {}", id.0),
    }
}

fn acc_spec<T: Scalar>(adjoints: &mut [Option<Value<T>>], id: NodeId, g: Spectrum<T>) {
    match &mut adjoints[id.0] {
        slot @ None => *slot = Some(Value::Spec(g)),
        Some(Value::Spec(existing)) => {
            axpy(T::ONE, &g.coeffs.re, &mut existing.coeffs.re);
            axpy(T::ONE, &g.coeffs.im, &mut existing.coeffs.im);
        }
        Some(Value::Real(_)) => unreachable!("mixed adjoint kinds at node {}", id.0),
    }
}

//! Fixed little-endian checkpoint layout:
//!
//! ```text
//! magic "SPFM" | version u32 | meta_len u32 | meta JSON (model config,
//! hyperparameters, epoch, normalization) | param_count u32 | per tensor:
//! name_len u32, name, trainable u8, decay u8, dtype u8, rank u32,
//! dims u32*rank, raw LE data | optimizer step u64 | m then v tensor
//! records in parameter order | rng state u128 | rng inc u128
//! ```
//!
//! save -> load -> save is byte-identical; magic, version, truncation, and
//! trailing-byte violations produce distinct errors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::params::ParamStore;
use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::numerics::rng::Rng;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;
use crate::training::optim::OptimState;
use crate::training::trainer::TrainHyper;

pub const MAGIC: [u8; 4] = *b"SPFM";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub hyper: TrainHyper,
    pub epoch: u32,
    pub norm: Normalization,
}

#[derive(Clone, Debug)]
pub struct Checkpoint<T: Scalar> {
    pub meta: CheckpointMeta,
    pub params: ParamStore<T>,
    pub optim: OptimState<T>,
    pub rng: Rng,
}

fn write_tensor<T: Scalar>(out: &mut Vec<u8>, name: &str, trainable: bool, decay: bool, t: &Tensor<T>) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(trainable as u8);
    out.push(decay as u8);
    out.push(T::DTYPE_TAG);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(out);
    }
}

pub fn serialize_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&ckpt.meta)?;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);

    let params = &ckpt.params;
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for i in 0..params.len() {
        write_tensor(
            &mut out,
            params.name_at(i),
            params.trainable_at(i),
            params.decay_at(i),
            params.tensor_at(i),
        );
    }
    out.extend_from_slice(&ckpt.optim.step.to_le_bytes());
    let (m, v) = ckpt.optim.moments();
    for (i, t) in m.iter().enumerate() {
        write_tensor(&mut out, &format!("m.{}", params.name_at(i)), false, false, t);
    }
    for (i, t) in v.iter().enumerate() {
        write_tensor(&mut out, &format!("v.{}", params.name_at(i)), false, false, t);
    }
    let (state, inc) = ckpt.rng.state();
    out.extend_from_slice(&state.to_le_bytes());
    out.extend_from_slice(&inc.to_le_bytes());
    Ok(out)
}

pub fn save_checkpoint<T: Scalar>(path: &Path, ckpt: &Checkpoint<T>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serialize_checkpoint(ckpt)?)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128> {
        let b = self.take(16)?;
        Ok(u128::from_le_bytes(b.try_into().unwrap()))
    }
}

struct TensorRecord<T: Scalar> {
    name: String,
    trainable: bool,
    decay: bool,
    tensor: Tensor<T>,
}

fn read_tensor<T: Scalar>(r: &mut Reader) -> Result<TensorRecord<T>> {
    let name_len = r.u32()? as usize;
    let name = String::from_utf8(r.take(name_len)?.to_vec())
        .map_err(|_| Error::Checkpoint("invalid tensor name".into()))?;
    let trainable = r.u8()? != 0;
    let decay = r.u8()? != 0;
    let dtype = r.u8()?;
    if dtype != T::DTYPE_TAG {
        return Err(Error::Checkpoint(format!(
            "dtype mismatch for {name:?}: stored tag {dtype}, expected {}",
            T::DTYPE_TAG
        )));
    }
    let rank = r.u32()? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u32()? as usize);
    }
    let numel: usize = shape.iter().product();
    let raw = r.take(numel * T::BYTE_WIDTH)?;
    let data: Vec<T> = raw.chunks_exact(T::BYTE_WIDTH).map(T::read_le).collect();
    Ok(TensorRecord {
        name,
        trainable,
        decay,
        tensor: Tensor::from_vec(&shape, data)?,
    })
}

pub fn deserialize_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic: not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expect {VERSION})"
        )));
    }
    let meta_len = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)?;

    let count = r.u32()? as usize;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let rec = read_tensor::<T>(&mut r)?;
        params.insert(rec.name, rec.tensor, rec.trainable, rec.decay)?;
    }
    let step = r.u64()?;
    let mut m = Vec::with_capacity(count);
    let mut v = Vec::with_capacity(count);
    for i in 0..count {
        let rec = read_tensor::<T>(&mut r)?;
        if rec.name != format!("m.{}", params.name_at(i)) {
            return Err(Error::Checkpoint(format!(
                "optimizer record {:?} out of order",
                rec.name
            )));
        }
        m.push(rec.tensor);
    }
    for i in 0..count {
        let rec = read_tensor::<T>(&mut r)?;
        if rec.name != format!("v.{}", params.name_at(i)) {
            return Err(Error::Checkpoint(format!(
                "optimizer record {:?} out of order",
                rec.name
            )));
        }
        v.push(rec.tensor);
    }
    let h = &meta.hyper;
    let optim = OptimState::from_parts(step, h.beta1, h.beta2, h.eps, h.weight_decay, m, v);
    let state = r.u128()?;
    let inc = r.u128()?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "trailing bytes: {} past end of checkpoint",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint {
        meta,
        params,
        optim,
        rng: Rng::from_state(state, inc),
    })
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    deserialize_checkpoint(&bytes)
}

//! IDX-format parsing (big-endian headers, raw u8 payloads). Files may be
//! gzip-compressed; the stream is inflated before parsing.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803; // 2051
const LABELS_MAGIC: u32 = 0x0000_0801; // 2049

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut raw)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut inflated = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut inflated)
            .map_err(|e| Error::data(format!("bad gzip stream {}: {e}", path.display())))?;
        return Ok(inflated);
    }
    Ok(raw)
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::data(format!("truncated IDX header in {}", path.display())))
}

struct IdxImages {
    count: usize,
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
}

fn parse_idx_images(path: &Path) -> Result<IdxImages> {
    let bytes = read_bytes(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::data(format!(
            "bad image magic {magic} (expect {IMAGES_MAGIC}) in {}",
            path.display()
        )));
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let expect = 16 + count * rows * cols;
    if bytes.len() < expect {
        return Err(Error::data(format!(
            "truncated image data in {}: {} bytes, need {expect}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..expect].to_vec(),
    })
}

fn parse_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_bytes(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::data(format!(
            "bad label magic {magic} (expect {LABELS_MAGIC}) in {}",
            path.display()
        )));
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let expect = 8 + count;
    if bytes.len() < expect {
        return Err(Error::data(format!(
            "truncated label data in {}",
            path.display()
        )));
    }
    Ok(bytes[8..expect].to_vec())
}

fn assemble<T: Scalar>(images: IdxImages, labels: Vec<u8>, pad_to: Option<usize>) -> Result<Dataset<T>> {
    let (n, rows, cols) = (images.count, images.rows, images.cols);
    let (h, w) = match pad_to {
        Some(side) if side >= rows && side >= cols => (side, side),
        Some(side) => {
            return Err(Error::data(format!(
                "cannot pad {rows}x{cols} images to {side}x{side}"
            )))
        }
        None => (rows, cols),
    };
    let (top, left) = ((h - rows) / 2, (w - cols) / 2);
    let mut raw = Tensor::zeros(&[n, h, w, 1]);
    let inv = 1.0 / 255.0;
    for i in 0..n {
        for r in 0..rows {
            for c in 0..cols {
                let px = images.pixels[(i * rows + r) * cols + c] as f64 * inv;
                raw.data_mut()[(i * h + top + r) * w + left + c] = T::from_f64(px);
            }
        }
    }
    let labels: Vec<usize> = labels.iter().map(|&b| b as usize).collect();
    Dataset::from_raw(raw, labels, 10)
}

/// Parse an IDX image/label pair into a normalized dataset at the native
/// resolution.
pub fn load_mnist_idx<T: Scalar>(images_path: &Path, labels_path: &Path) -> Result<Dataset<T>> {
    let images = parse_idx_images(images_path)?;
    let labels = parse_idx_labels(labels_path)?;
    if images.count != labels.len() {
        return Err(Error::data(format!(
            "count mismatch: {} images vs {} labels",
            images.count,
            labels.len()
        )));
    }
    assemble(images, labels, None)
}

fn find_file(dir: &Path, stem: &str) -> Result<std::path::PathBuf> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(&name);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(Error::data(format!(
        "missing {stem}[.gz] under {}",
        dir.display()
    )))
}

/// Load the train or test split from a directory holding the standard
/// file names, zero-padding 28x28 digits to `pad_to` (pad first, then
/// normalize) so the toy patch sizes divide evenly.
pub fn load_mnist_dir<T: Scalar>(dir: &Path, train: bool, pad_to: Option<usize>) -> Result<Dataset<T>> {
    let prefix = if train { "train" } else { "t10k" };
    let images_path = find_file(dir, &format!("{prefix}-images-idx3-ubyte"))?;
    let labels_path = find_file(dir, &format!("{prefix}-labels-idx1-ubyte"))?;
    let images = parse_idx_images(&images_path)?;
    let labels = parse_idx_labels(&labels_path)?;
    if images.count != labels.len() {
        return Err(Error::data(format!(
            "count mismatch: {} images vs {} labels",
            images.count,
            labels.len()
        )));
    }
    assemble(images, labels, pad_to)
}

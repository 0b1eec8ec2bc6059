//! CIFAR-10 binary format: each record is one label byte followed by 3072
//! channel-major pixels (1024 R, 1024 G, 1024 B over a 32x32 grid).

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

const RECORD: usize = 3073;
const SIDE: usize = 32;

pub fn load_cifar10_binary<T: Scalar>(paths: &[impl AsRef<Path>]) -> Result<Dataset<T>> {
    if paths.is_empty() {
        return Err(Error::data("no CIFAR-10 files given"));
    }
    let mut records = 0usize;
    let mut files = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let mut bytes = Vec::new();
        File::open(p)
            .map_err(|e| Error::data(format!("cannot open {}: {e}", p.display())))?
            .read_to_end(&mut bytes)?;
        if bytes.is_empty() || bytes.len() % RECORD != 0 {
            return Err(Error::data(format!(
                "bad length {} in {}: must be a positive multiple of {RECORD}",
                bytes.len(),
                p.display()
            )));
        }
        records += bytes.len() / RECORD;
        files.push(bytes);
    }
    let mut raw = Tensor::zeros(&[records, SIDE, SIDE, 3]);
    let mut labels = Vec::with_capacity(records);
    let inv = 1.0 / 255.0;
    let mut row = 0usize;
    for bytes in &files {
        for rec in bytes.chunks(RECORD) {
            let label = rec[0] as usize;
            if label > 9 {
                return Err(Error::data(format!("label {label} > 9 in record {row}")));
            }
            labels.push(label);
            for c in 0..3 {
                for y in 0..SIDE {
                    for x in 0..SIDE {
                        let px = rec[1 + c * SIDE * SIDE + y * SIDE + x] as f64 * inv;
                        raw.data_mut()[((row * SIDE + y) * SIDE + x) * 3 + c] = T::from_f64(px);
                    }
                }
            }
            row += 1;
        }
    }
    Dataset::from_raw(raw, labels, 10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn crafted_record(label: u8, r: u8, g: u8, b: u8) -> Vec<u8> {
        let mut rec = vec![label];
        rec.extend(std::iter::repeat(r).take(1024));
        rec.extend(std::iter::repeat(g).take(1024));
        rec.extend(std::iter::repeat(b).take(1024));
        rec
    }

    #[test]
    fn single_record_shape_and_channel_order() {
        let dir = std::env::temp_dir().join("spfm_cifar");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("one.bin");
        File::create(&path)
            .unwrap()
            .write_all(&crafted_record(4, 1, 2, 3))
            .unwrap();
        let ds: Dataset<f64> = load_cifar10_binary(&[&path]).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.dims(), (32, 32, 3));
        assert_eq!(ds.labels, vec![4]);
        // channel-major source interleaves to H, W, Ch with R=1, G=2, B=3
        let mut raw = ds.images.clone();
        ds.norm.invert(&mut raw);
        for y in 0..32 {
            for x in 0..32 {
                assert!((raw.at(&[0, y, x, 0]) - 1.0 / 255.0).abs() < 1e-9);
                assert!((raw.at(&[0, y, x, 1]) - 2.0 / 255.0).abs() < 1e-9);
                assert!((raw.at(&[0, y, x, 2]) - 3.0 / 255.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn multiple_records_count() {
        let dir = std::env::temp_dir().join("spfm_cifar_multi");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ten.bin");
        let mut bytes = Vec::new();
        for i in 0..10u8 {
            bytes.extend(crafted_record(i % 10, i, i, i));
        }
        File::create(&path).unwrap().write_all(&bytes).unwrap();
        let ds: Dataset<f32> = load_cifar10_binary(&[&path]).unwrap();
        assert_eq!(ds.len(), 10);
    }

    #[test]
    fn bad_length_and_label_rejected() {
        let dir = std::env::temp_dir().join("spfm_cifar_bad");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.bin");
        File::create(&path).unwrap().write_all(&[0u8; 100]).unwrap();
        assert!(load_cifar10_binary::<f32>(&[&path]).is_err());

        let path2 = dir.join("badlabel.bin");
        File::create(&path2)
            .unwrap()
            .write_all(&crafted_record(10, 0, 0, 0))
            .unwrap();
        let err = load_cifar10_binary::<f32>(&[&path2]).unwrap_err().to_string();
        assert!(err.contains("label 10"), "{err}");
    }
}

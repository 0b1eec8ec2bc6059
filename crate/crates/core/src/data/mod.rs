//! Dataset ingestion (MNIST IDX, CIFAR-10 binary), a synthetic
//! frequency-discrimination generator, and deterministic batch iteration.

pub mod batches;
pub mod cifar;
pub mod mnist;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

pub use batches::{AugmentFlags, BatchIter};
pub use cifar::load_cifar10_binary;
pub use mnist::{load_mnist_dir, load_mnist_idx};
pub use synth::gen_frequency_dataset;

/// Per-channel normalization constants computed at load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Normalization {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn apply<T: Scalar>(&self, images: &mut Tensor<T>) {
        let ch = self.mean.len();
        for (i, v) in images.data_mut().iter_mut().enumerate() {
            let c = i % ch;
            *v = T::from_f64((v.to_f64() - self.mean[c]) / self.std[c]);
        }
    }

    pub fn invert<T: Scalar>(&self, images: &mut Tensor<T>) {
        let ch = self.mean.len();
        for (i, v) in images.data_mut().iter_mut().enumerate() {
            let c = i % ch;
            *v = T::from_f64(v.to_f64() * self.std[c] + self.mean[c]);
        }
    }
}

/// In-memory labelled image set, normalized at construction.
#[derive(Clone, Debug)]
pub struct Dataset<T: Scalar> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub norm: Normalization,
}

impl<T: Scalar> Dataset<T> {
    /// Build from raw (un-normalized) images: computes dataset mean/std per
    /// channel and normalizes in place.
    pub fn from_raw(mut images: Tensor<T>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let shape = images.shape().to_vec();
        if shape.len() != 4 {
            return Err(Error::data(format!(
                "dataset images must be [N, H, W, Ch], got {shape:?}"
            )));
        }
        if shape[0] != labels.len() {
            return Err(Error::data(format!(
                "{} images but {} labels",
                shape[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if !images.all_finite() {
            return Err(Error::data("non-finite pixel values"));
        }
        let ch = shape[3];
        let per = images.numel() / ch;
        let mut mean = vec![0.0f64; ch];
        for (i, v) in images.data().iter().enumerate() {
            mean[i % ch] += v.to_f64();
        }
        for m in &mut mean {
            *m /= per as f64;
        }
        let mut var = vec![0.0f64; ch];
        for (i, v) in images.data().iter().enumerate() {
            let d = v.to_f64() - mean[i % ch];
            var[i % ch] += d * d;
        }
        let std: Vec<f64> = var
            .iter()
            .map(|&v| (v / per as f64).sqrt().max(1e-6))
            .collect();
        let norm = Normalization { mean, std };
        norm.apply(&mut images);
        Ok(Dataset {
            images,
            labels,
            num_classes,
            norm,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// (H, W, Ch).
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    fn image_stride(&self) -> usize {
        let (h, w, ch) = self.dims();
        h * w * ch
    }

    /// Copy the given samples into a `[n, H, W, Ch]` batch tensor.
    pub fn gather(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let (h, w, ch) = self.dims();
        let stride = self.image_stride();
        let mut images = Tensor::zeros(&[indices.len(), h, w, ch]);
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            images.data_mut()[row * stride..(row + 1) * stride]
                .copy_from_slice(&self.images.data()[i * stride..(i + 1) * stride]);
            labels.push(self.labels[i]);
        }
        (images, labels)
    }

    /// First `n` samples (deterministic test subsetting).
    pub fn take(&self, n: usize) -> Dataset<T> {
        let n = n.min(self.len());
        let indices: Vec<usize> = (0..n).collect();
        let (images, labels) = self.gather(&indices);
        Dataset {
            images,
            labels,
            num_classes: self.num_classes,
            norm: self.norm.clone(),
        }
    }
}

//! Synthetic frequency-discrimination task: class k is a sinusoid at radial
//! spatial frequency k+1 plus Gaussian noise. Orientations are drawn from
//! the integer frequency lattice near the class radius so every sample's
//! spectral peak lands exactly on a DFT bin; with zero noise the classes
//! are perfectly separable by peak radius, which is what makes this set a
//! sharp probe for spectral token mixers.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::rng::Rng;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

/// Lattice frequency vectors with |v| within 0.3 of `radius`, restricted to
/// the canonical half-plane (fx > 0, or fx == 0 and fy > 0).
fn lattice_directions(radius: usize, size: usize) -> Vec<(i64, i64)> {
    let r = radius as f64;
    let cap = (size / 2) as i64;
    let mut out = Vec::new();
    for fy in -cap..=cap {
        for fx in 0..=cap {
            if fx == 0 && fy <= 0 {
                continue;
            }
            let norm = ((fx * fx + fy * fy) as f64).sqrt();
            if (norm - r).abs() <= 0.3 {
                out.push((fy, fx));
            }
        }
    }
    out
}

pub fn gen_frequency_dataset<T: Scalar>(
    rng: &mut Rng,
    n: usize,
    classes: usize,
    size: usize,
    sigma: f64,
) -> Result<Dataset<T>> {
    if classes == 0 || classes > size / 2 {
        return Err(Error::data(format!(
            "classes too large: {classes} classes need a grid of at least {}",
            2 * classes
        )));
    }
    if n == 0 || n % classes != 0 {
        return Err(Error::data(format!(
            "sample count {n} must be a positive multiple of {classes} classes"
        )));
    }
    if sigma < 0.0 {
        return Err(Error::data(format!("negative noise sigma {sigma}")));
    }
    let directions: Vec<Vec<(i64, i64)>> = (1..=classes)
        .map(|f| lattice_directions(f, size))
        .collect();

    let mut images = Tensor::zeros(&[n, size, size, 1]);
    let mut labels = Vec::with_capacity(n);
    let tau = 2.0 * std::f64::consts::PI;
    for i in 0..n {
        let class = i % classes;
        labels.push(class);
        let dirs = &directions[class];
        let (fy, fx) = dirs[rng.gen_range(dirs.len())];
        let phase = tau * rng.next_f64();
        for y in 0..size {
            for x in 0..size {
                let arg = tau * (fy as f64 * y as f64 + fx as f64 * x as f64) / size as f64 + phase;
                let mut v = arg.sin();
                if sigma > 0.0 {
                    v += sigma * rng.next_normal();
                }
                images.data_mut()[(i * size + y) * size + x] = T::from_f64(v);
            }
        }
    }
    Dataset::from_raw(images, labels, classes)
}

//! Spatial rearrangement kernels: single-level orthonormal 2-D Haar
//! transform (per channel) and 2x2 space-to-depth used by stage merges.

use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

/// Single-level orthonormal Haar analysis: `[H, W, C]` -> `[4, H/2, W/2, C]`
/// with subband order LL, LH, HL, HH. For a 2x2 block [[a, b], [c, d]]:
/// LL=(a+b+c+d)/2, LH=(a-b+c-d)/2, HL=(a+b-c-d)/2, HH=(a-b-c+d)/2.
pub fn haar_dwt2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 3 {
        return Err(Error::shape(format!("haar_dwt2 expects [H, W, C], got {:?}", x.shape())));
    }
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("haar_dwt2 requires even dims, got {h}x{w}")));
    }
    let (h2, w2) = (h / 2, w / 2);
    let half = T::from_f64(0.5);
    let mut out = Tensor::zeros(&[4, h2, w2, c]);
    let band = h2 * w2 * c;
    let xd = x.data();
    for i in 0..h2 {
        for j in 0..w2 {
            for ch in 0..c {
                let a = xd[((2 * i) * w + 2 * j) * c + ch];
                let b = xd[((2 * i) * w + 2 * j + 1) * c + ch];
                let cc = xd[((2 * i + 1) * w + 2 * j) * c + ch];
                let d = xd[((2 * i + 1) * w + 2 * j + 1) * c + ch];
                let base = (i * w2 + j) * c + ch;
                let o = out.data_mut();
                o[base] = (a + b + cc + d) * half;
                o[band + base] = (a - b + cc - d) * half;
                o[2 * band + base] = (a + b - cc - d) * half;
                o[3 * band + base] = (a - b - cc + d) * half;
            }
        }
    }
    Ok(out)
}

/// Inverse of `haar_dwt2`. The analysis is orthonormal, so this is also
/// its adjoint.
pub fn haar_idwt2<T: Scalar>(bands: &Tensor<T>) -> Result<Tensor<T>> {
    if bands.rank() != 4 || bands.shape()[0] != 4 {
        return Err(Error::shape(format!(
            "haar_idwt2 expects [4, H/2, W/2, C], got {:?}",
            bands.shape()
        )));
    }
    let (h2, w2, c) = (bands.shape()[1], bands.shape()[2], bands.shape()[3]);
    let (h, w) = (2 * h2, 2 * w2);
    let half = T::from_f64(0.5);
    let mut out = Tensor::zeros(&[h, w, c]);
    let band = h2 * w2 * c;
    let bd = bands.data();
    for i in 0..h2 {
        for j in 0..w2 {
            for ch in 0..c {
                let base = (i * w2 + j) * c + ch;
                let ll = bd[base];
                let lh = bd[band + base];
                let hl = bd[2 * band + base];
                let hh = bd[3 * band + base];
                let o = out.data_mut();
                o[((2 * i) * w + 2 * j) * c + ch] = (ll + lh + hl + hh) * half;
                o[((2 * i) * w + 2 * j + 1) * c + ch] = (ll - lh + hl - hh) * half;
                o[((2 * i + 1) * w + 2 * j) * c + ch] = (ll + lh - hl - hh) * half;
                o[((2 * i + 1) * w + 2 * j + 1) * c + ch] = (ll - lh - hl + hh) * half;
            }
        }
    }
    Ok(out)
}

/// Non-overlapping 2x2 window concatenation: `[H, W, C]` -> `[H/2, W/2, 4C]`
/// with window order (0,0), (0,1), (1,0), (1,1).
pub fn space_to_depth2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 3 {
        return Err(Error::shape(format!("space_to_depth2 expects [H, W, C], got {:?}", x.shape())));
    }
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("space_to_depth2 requires even dims, got {h}x{w}")));
    }
    let (h2, w2) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[h2, w2, 4 * c]);
    let xd = x.data();
    for i in 0..h2 {
        for j in 0..w2 {
            for (s, (di, dj)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                for ch in 0..c {
                    let v = xd[((2 * i + di) * w + 2 * j + dj) * c + ch];
                    out.data_mut()[(i * w2 + j) * 4 * c + s * c + ch] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Inverse (and adjoint) of `space_to_depth2`.
pub fn depth_to_space2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 3 || x.shape()[2] % 4 != 0 {
        return Err(Error::shape(format!(
            "depth_to_space2 expects [H/2, W/2, 4C], got {:?}",
            x.shape()
        )));
    }
    let (h2, w2, c4) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let c = c4 / 4;
    let (h, w) = (2 * h2, 2 * w2);
    let mut out = Tensor::zeros(&[h, w, c]);
    let xd = x.data();
    for i in 0..h2 {
        for j in 0..w2 {
            for (s, (di, dj)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                for ch in 0..c {
                    let v = xd[(i * w2 + j) * c4 + s * c + ch];
                    out.data_mut()[((2 * i + di) * w + 2 * j + dj) * c + ch] = v;
                }
            }
        }
    }
    Ok(out)
}

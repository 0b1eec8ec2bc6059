//! Real 2-D FFT / inverse FFT over token grids, a brute-force DFT oracle,
//! and the adjoint maps the autodiff layer needs.
//!
//! Conventions: unnormalized forward transform (kernel e^{-i2pi...}, no 1/N),
//! inverse carries the full 1/(H*W) factor, so irfft2(rfft2(x)) == x and an
//! all-ones spectral gate is an exact identity. Power-of-two sizes take the
//! radix-2 path; anything else falls back to a direct O(n^2) 1-D DFT.

use crate::error::{Error, Result};
use crate::numerics::complex::{half_width, Spectrum};
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

fn is_pow2(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// Precomputed 1-D transform: stage twiddles for the radix-2 path, a root
/// table for the direct O(n^2) fallback. Build once per 2-D transform,
/// reuse across every row/column/channel.
enum Fft1d<T: Scalar> {
    Tiny,
    Radix2 {
        n: usize,
        // per stage: half-length twiddle pair tables
        stages: Vec<(Vec<T>, Vec<T>)>,
    },
    Direct {
        n: usize,
        roots_re: Vec<T>,
        roots_im: Vec<T>,
        scratch_re: std::cell::RefCell<Vec<T>>,
        scratch_im: std::cell::RefCell<Vec<T>>,
    },
}

impl<T: Scalar> Fft1d<T> {
    fn new(n: usize, inverse: bool) -> Self {
        let sign = if inverse { 1.0 } else { -1.0 };
        if n <= 1 {
            return Fft1d::Tiny;
        }
        if is_pow2(n) {
            let mut stages = Vec::new();
            let mut len = 2;
            while len <= n {
                let half = len / 2;
                let mut tr = Vec::with_capacity(half);
                let mut ti = Vec::with_capacity(half);
                for k in 0..half {
                    let ang = sign * 2.0 * std::f64::consts::PI * k as f64 / len as f64;
                    tr.push(T::from_f64(ang.cos()));
                    ti.push(T::from_f64(ang.sin()));
                }
                stages.push((tr, ti));
                len <<= 1;
            }
            Fft1d::Radix2 { n, stages }
        } else {
            // roots indexed by (j*k) mod n keep the angles exact
            let mut roots_re = Vec::with_capacity(n);
            let mut roots_im = Vec::with_capacity(n);
            for m in 0..n {
                let ang = sign * 2.0 * std::f64::consts::PI * m as f64 / n as f64;
                roots_re.push(T::from_f64(ang.cos()));
                roots_im.push(T::from_f64(ang.sin()));
            }
            Fft1d::Direct {
                n,
                roots_re,
                roots_im,
                scratch_re: std::cell::RefCell::new(vec![T::ZERO; n]),
                scratch_im: std::cell::RefCell::new(vec![T::ZERO; n]),
            }
        }
    }

    fn run(&self, re: &mut [T], im: &mut [T]) {
        match self {
            Fft1d::Tiny => {}
            Fft1d::Radix2 { n, stages } => {
                let n = *n;
                let mut j = 0usize;
                for i in 1..n {
                    let mut bit = n >> 1;
                    while j & bit != 0 {
                        j ^= bit;
                        bit >>= 1;
                    }
                    j |= bit;
                    if i < j {
                        re.swap(i, j);
                        im.swap(i, j);
                    }
                }
                let mut len = 2;
                for (tr, ti) in stages {
                    let half = len / 2;
                    for start in (0..n).step_by(len) {
                        for k in 0..half {
                            let (wr, wi) = (tr[k], ti[k]);
                            let (i0, i1) = (start + k, start + k + half);
                            let (vr, vi) =
                                (re[i1] * wr - im[i1] * wi, re[i1] * wi + im[i1] * wr);
                            let (ur, ui) = (re[i0], im[i0]);
                            re[i0] = ur + vr;
                            im[i0] = ui + vi;
                            re[i1] = ur - vr;
                            im[i1] = ui - vi;
                        }
                    }
                    len <<= 1;
                }
            }
            Fft1d::Direct {
                n,
                roots_re,
                roots_im,
                scratch_re,
                scratch_im,
            } => {
                let n = *n;
                let mut out_re = scratch_re.borrow_mut();
                let mut out_im = scratch_im.borrow_mut();
                for k in 0..n {
                    let mut ar = T::ZERO;
                    let mut ai = T::ZERO;
                    for j in 0..n {
                        let m = (j * k) % n;
                        ar += re[j] * roots_re[m] - im[j] * roots_im[m];
                        ai += re[j] * roots_im[m] + im[j] * roots_re[m];
                    }
                    out_re[k] = ar;
                    out_im[k] = ai;
                }
                re.copy_from_slice(&out_re);
                im.copy_from_slice(&out_im);
            }
        }
    }
}

/// Full 2-D transform of an H x W complex grid held row-major.
fn fft2_grid_planned<T: Scalar>(
    re: &mut [T],
    im: &mut [T],
    h: usize,
    w: usize,
    row_plan: &Fft1d<T>,
    col_plan: &Fft1d<T>,
) {
    for row in 0..h {
        row_plan.run(&mut re[row * w..(row + 1) * w], &mut im[row * w..(row + 1) * w]);
    }
    let mut cr = vec![T::ZERO; h];
    let mut ci = vec![T::ZERO; h];
    for col in 0..w {
        for row in 0..h {
            cr[row] = re[row * w + col];
            ci[row] = im[row * w + col];
        }
        col_plan.run(&mut cr, &mut ci);
        for row in 0..h {
            re[row * w + col] = cr[row];
            im[row * w + col] = ci[row];
        }
    }
}

fn grid_dims<T: Scalar>(grid: &Tensor<T>) -> Result<(usize, usize, usize)> {
    if grid.rank() != 3 {
        return Err(Error::shape(format!(
            "expected [H, W, C] grid, got {:?}",
            grid.shape()
        )));
    }
    let (h, w, c) = (grid.shape()[0], grid.shape()[1], grid.shape()[2]);
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::shape("empty grid".to_string()));
    }
    Ok((h, w, c))
}

/// Forward real 2-D FFT per channel; Hermitian-reduced output.
pub fn rfft2<T: Scalar>(grid: &Tensor<T>) -> Result<Spectrum<T>> {
    let (h, w, c) = grid_dims(grid)?;
    let wh = half_width(w);
    let mut spec = Spectrum::zeros(h, w, c);
    let data = grid.data();
    let row_plan = Fft1d::new(w, false);
    let col_plan = Fft1d::new(h, false);
    let mut re = vec![T::ZERO; h * w];
    let mut im = vec![T::ZERO; h * w];
    let mut cr = vec![T::ZERO; h];
    let mut ci = vec![T::ZERO; h];
    for ch in 0..c {
        for i in 0..h * w {
            re[i] = data[i * c + ch];
            im[i] = T::ZERO;
        }
        // width-axis transforms first, then only the stored columns
        for row in 0..h {
            row_plan.run(&mut re[row * w..(row + 1) * w], &mut im[row * w..(row + 1) * w]);
        }
        for col in 0..wh {
            for row in 0..h {
                cr[row] = re[row * w + col];
                ci[row] = im[row * w + col];
            }
            col_plan.run(&mut cr, &mut ci);
            for row in 0..h {
                let idx = (row * wh + col) * c + ch;
                spec.coeffs.re[idx] = cr[row];
                spec.coeffs.im[idx] = ci[row];
            }
        }
    }
    Ok(spec)
}

/// Expand a half spectrum into the full H x W complex grid of one channel,
/// filling the mirrored region by conjugate symmetry.
fn expand_channel<T: Scalar>(spec: &Spectrum<T>, ch: usize, re: &mut [T], im: &mut [T]) {
    let (h, w, c, wh) = (spec.grid_h, spec.grid_w, spec.channels, spec.w_half());
    for row in 0..h {
        for col in 0..w {
            let (sr, si) = if col < wh {
                let idx = (row * wh + col) * c + ch;
                (spec.coeffs.re[idx], spec.coeffs.im[idx])
            } else {
                let mrow = (h - row) % h;
                let mcol = w - col;
                let idx = (mrow * wh + mcol) * c + ch;
                (spec.coeffs.re[idx], -spec.coeffs.im[idx])
            };
            re[row * w + col] = sr;
            im[row * w + col] = si;
        }
    }
}

/// Inverse of `rfft2`: conjugate-symmetric expansion, inverse transform,
/// 1/(H*W) normalization, real part.
pub fn irfft2<T: Scalar>(spec: &Spectrum<T>) -> Result<Tensor<T>> {
    let (h, w, c) = (spec.grid_h, spec.grid_w, spec.channels);
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::shape("empty spectrum".to_string()));
    }
    let expect = [h, half_width(w), c];
    if spec.coeffs.shape() != expect {
        return Err(Error::shape(format!(
            "inconsistent spectrum coeffs {:?}, expect {expect:?}",
            spec.coeffs.shape()
        )));
    }
    let mut out = Tensor::zeros(&[h, w, c]);
    let norm = T::from_f64(1.0 / (h * w) as f64);
    let row_plan = Fft1d::new(w, true);
    let col_plan = Fft1d::new(h, true);
    let mut re = vec![T::ZERO; h * w];
    let mut im = vec![T::ZERO; h * w];
    for ch in 0..c {
        expand_channel(spec, ch, &mut re, &mut im);
        fft2_grid_planned(&mut re, &mut im, h, w, &row_plan, &col_plan);
        for i in 0..h * w {
            out.data_mut()[i * c + ch] = re[i] * norm;
        }
    }
    Ok(out)
}

/// Brute-force O((HW)^2) evaluation of the DFT definition; the independent
/// verification oracle for `rfft2`. Shares no code with the fast path.
pub fn dft2_oracle<T: Scalar>(grid: &Tensor<T>) -> Result<Spectrum<T>> {
    let (h, w, c) = grid_dims(grid)?;
    let wh = half_width(w);
    let mut spec = Spectrum::zeros(h, w, c);
    let data = grid.data();
    for ch in 0..c {
        for fh in 0..h {
            for fw in 0..wh {
                let mut ar = T::ZERO;
                let mut ai = T::ZERO;
                for p in 0..h {
                    for q in 0..w {
                        let frac =
                            (fh * p) as f64 / h as f64 + (fw * q) as f64 / w as f64;
                        let ang = -2.0 * std::f64::consts::PI * frac;
                        let x = data[(p * w + q) * c + ch];
                        ar += x * T::from_f64(ang.cos());
                        ai += x * T::from_f64(ang.sin());
                    }
                }
                let idx = (fh * wh + fw) * c + ch;
                spec.coeffs.re[idx] = ar;
                spec.coeffs.im[idx] = ai;
            }
        }
    }
    Ok(spec)
}

/// Real part of the full (unnormalized) 2-D DFT, per channel. This is the
/// gate-free Fourier token mixer; the map is its own adjoint because the
/// cosine kernel is symmetric in (frequency, position).
pub fn fft2_real<T: Scalar>(grid: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, c) = grid_dims(grid)?;
    let mut out = Tensor::zeros(&[h, w, c]);
    let data = grid.data();
    let row_plan = Fft1d::new(w, false);
    let col_plan = Fft1d::new(h, false);
    let mut re = vec![T::ZERO; h * w];
    let mut im = vec![T::ZERO; h * w];
    for ch in 0..c {
        for i in 0..h * w {
            re[i] = data[i * c + ch];
            im[i] = T::ZERO;
        }
        fft2_grid_planned(&mut re, &mut im, h, w, &row_plan, &col_plan);
        for i in 0..h * w {
            out.data_mut()[i * c + ch] = re[i];
        }
    }
    Ok(out)
}

/// Per-column Hermitian weights: interior columns represent a conjugate
/// pair of full-spectrum entries, the self-conjugate columns (w = 0, and
/// w = W/2 for even W) represent one.
pub fn hermitian_col_weight(w_full: usize, col: usize) -> f64 {
    if col == 0 || (w_full % 2 == 0 && col == w_full / 2) {
        1.0
    } else {
        2.0
    }
}

/// Adjoint of `irfft2` as a linear map R^{2 H Wh C} -> R^{H W C}, i.e. the
/// gradient of the real output with respect to the stored (re, im) planes:
/// (weight_col / (H*W)) * rfft2(grid_adjoint).
pub fn irfft2_adjoint<T: Scalar>(grid_adjoint: &Tensor<T>) -> Result<Spectrum<T>> {
    let (h, w, _c) = grid_dims(grid_adjoint)?;
    let mut spec = rfft2(grid_adjoint)?;
    let wh = spec.w_half();
    let c = spec.channels;
    let inv = 1.0 / (h * w) as f64;
    for col in 0..wh {
        let scale = T::from_f64(hermitian_col_weight(w, col) * inv);
        for row in 0..h {
            for ch in 0..c {
                let idx = (row * wh + col) * c + ch;
                spec.coeffs.re[idx] *= scale;
                spec.coeffs.im[idx] *= scale;
            }
        }
    }
    Ok(spec)
}

/// Adjoint of `rfft2`: zero-pad the stored half back to the full grid
/// (no conjugate fill), apply the unnormalized inverse kernel, real part.
pub fn rfft2_adjoint<T: Scalar>(spec_adjoint: &Spectrum<T>) -> Result<Tensor<T>> {
    let (h, w, c) = (
        spec_adjoint.grid_h,
        spec_adjoint.grid_w,
        spec_adjoint.channels,
    );
    let wh = spec_adjoint.w_half();
    let mut out = Tensor::zeros(&[h, w, c]);
    let row_plan = Fft1d::new(w, true);
    let col_plan = Fft1d::new(h, true);
    let mut re = vec![T::ZERO; h * w];
    let mut im = vec![T::ZERO; h * w];
    for ch in 0..c {
        re.iter_mut().for_each(|x| *x = T::ZERO);
        im.iter_mut().for_each(|x| *x = T::ZERO);
        for row in 0..h {
            for col in 0..wh {
                let idx = (row * wh + col) * c + ch;
                re[row * w + col] = spec_adjoint.coeffs.re[idx];
                im[row * w + col] = spec_adjoint.coeffs.im[idx];
            }
        }
        fft2_grid_planned(&mut re, &mut im, h, w, &row_plan, &col_plan);
        for i in 0..h * w {
            out.data_mut()[i * c + ch] = re[i];
        }
    }
    Ok(out)
}

/// Sum of |X|^2 over the full Hermitian spectrum reconstructed from the
/// stored half (Parseval bookkeeping).
pub fn spectrum_energy<T: Scalar>(spec: &Spectrum<T>) -> f64 {
    let wh = spec.w_half();
    let mut acc = 0.0;
    for row in 0..spec.grid_h {
        for col in 0..wh {
            let weight = hermitian_col_weight(spec.grid_w, col);
            for ch in 0..spec.channels {
                let idx = (row * wh + col) * spec.channels + ch;
                let (re, im) = (
                    spec.coeffs.re[idx].to_f64(),
                    spec.coeffs.im[idx].to_f64(),
                );
                acc += weight * (re * re + im * im);
            }
        }
    }
    acc
}

/// Scale every stored coefficient (test helper and gate application).
pub fn spectrum_map<T: Scalar>(
    spec: &Spectrum<T>,
    f: impl Fn(T, T) -> (T, T),
) -> Spectrum<T> {
    let mut out = spec.clone();
    for i in 0..out.coeffs.numel() {
        let (r, m) = f(spec.coeffs.re[i], spec.coeffs.im[i]);
        out.coeffs.re[i] = r;
        out.coeffs.im[i] = m;
    }
    out
}

use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;

/// Complex-valued tensor stored as separate real/imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor<T: Scalar> {
    shape: Vec<usize>,
    pub re: Vec<T>,
    pub im: Vec<T>,
}

impl<T: Scalar> ComplexTensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "complex tensor shape must be non-empty with positive dims, got {shape:?}"
        );
        let n = shape.iter().product();
        ComplexTensor {
            shape: shape.to_vec(),
            re: vec![T::ZERO; n],
            im: vec![T::ZERO; n],
        }
    }

    pub fn from_parts(shape: &[usize], re: Vec<T>, im: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || shape.iter().any(|&d| d == 0) || re.len() != n || im.len() != n {
            return Err(Error::shape(format!(
                "complex tensor: shape {shape:?} with re/im lengths {}/{}",
                re.len(),
                im.len()
            )));
        }
        Ok(ComplexTensor {
            shape: shape.to_vec(),
            re,
            im,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.re.len()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "complex add: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let re = self
            .re
            .iter()
            .zip(other.re.iter())
            .map(|(&a, &b)| a + b)
            .collect();
        let im = self
            .im
            .iter()
            .zip(other.im.iter())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(ComplexTensor {
            shape: self.shape.clone(),
            re,
            im,
        })
    }
}

/// Hermitian-reduced 2-D frequency representation of a real token grid.
///
/// `coeffs` holds the non-redundant half of the spectrum along the width
/// axis: shape `[grid_h, grid_w/2 + 1, channels]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum<T: Scalar> {
    pub grid_h: usize,
    pub grid_w: usize,
    pub channels: usize,
    pub coeffs: ComplexTensor<T>,
}

/// Number of stored width-axis frequencies for a full width `w`.
pub fn half_width(w: usize) -> usize {
    w / 2 + 1
}

impl<T: Scalar> Spectrum<T> {
    pub fn zeros(grid_h: usize, grid_w: usize, channels: usize) -> Self {
        Spectrum {
            grid_h,
            grid_w,
            channels,
            coeffs: ComplexTensor::zeros(&[grid_h, half_width(grid_w), channels]),
        }
    }

    pub fn new(grid_h: usize, grid_w: usize, channels: usize, coeffs: ComplexTensor<T>) -> Result<Self> {
        let expect = [grid_h, half_width(grid_w), channels];
        if coeffs.shape() != expect {
            return Err(Error::shape(format!(
                "spectrum coeffs shape {:?} does not match grid {grid_h}x{grid_w}x{channels} (expect {expect:?})",
                coeffs.shape()
            )));
        }
        Ok(Spectrum {
            grid_h,
            grid_w,
            channels,
            coeffs,
        })
    }

    pub fn w_half(&self) -> usize {
        half_width(self.grid_w)
    }

    fn flat(&self, h: usize, w: usize, c: usize) -> usize {
        (h * self.w_half() + w) * self.channels + c
    }

    pub fn re_at(&self, h: usize, w: usize, c: usize) -> T {
        self.coeffs.re[self.flat(h, w, c)]
    }

    pub fn im_at(&self, h: usize, w: usize, c: usize) -> T {
        self.coeffs.im[self.flat(h, w, c)]
    }
}

use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;

/// Dense real-valued n-dimensional array, row-major.
///
/// Invariant: `data.len() == product(shape)` and every dimension is positive.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "tensor shape must be non-empty with positive dims, got {shape:?}"
        );
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::ZERO; n],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let mut t = Self::zeros(shape);
        t.data.iter_mut().for_each(|x| *x = value);
        t
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("invalid tensor shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} implies {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Element access by multi-index (tests and small-scale code).
    pub fn at(&self, idx: &[usize]) -> T {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut flat = 0;
        for (i, (&ix, &dim)) in idx.iter().zip(self.shape.iter()).enumerate() {
            debug_assert!(ix < dim, "index {ix} out of bounds for axis {i} (dim {dim})");
            flat = flat * dim + ix;
        }
        self.data[flat]
    }

    pub fn set(&mut self, idx: &[usize], value: T) {
        let mut flat = 0;
        for (&ix, &dim) in idx.iter().zip(self.shape.iter()) {
            flat = flat * dim + ix;
        }
        self.data[flat] = value;
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.numel() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!(
                "cannot reshape {:?} ({} elements) to {shape:?}",
                self.shape,
                self.numel()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    fn check_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{op}: shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "add")?;
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "sub")?;
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn mul_elem(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "mul")?;
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Add with `rhs` broadcast over leading axes: `rhs.shape` must be a
    /// suffix of `self.shape` (the only broadcast form supported).
    pub fn add_broadcast(&self, rhs: &Self) -> Result<Self> {
        if rhs.shape == self.shape {
            return self.add(rhs);
        }
        if rhs.shape.len() >= self.shape.len()
            || self.shape[self.shape.len() - rhs.shape.len()..] != rhs.shape[..]
        {
            return Err(Error::shape(format!(
                "broadcast add: {:?} is not a suffix of {:?}",
                rhs.shape, self.shape
            )));
        }
        let stride = rhs.numel();
        let mut out = self.clone();
        for chunk in out.data.chunks_mut(stride) {
            for (c, &r) in chunk.iter_mut().zip(rhs.data.iter()) {
                *c += r;
            }
        }
        Ok(out)
    }

    /// Sum over leading axes so the result has `suffix_shape` (adjoint of
    /// the broadcast add).
    pub fn reduce_to_suffix(&self, suffix_shape: &[usize]) -> Result<Self> {
        if suffix_shape == self.shape.as_slice() {
            return Ok(self.clone());
        }
        let stride: usize = suffix_shape.iter().product();
        if self.numel() % stride != 0 {
            return Err(Error::shape(format!(
                "reduce: {:?} not divisible into suffix {suffix_shape:?}",
                self.shape
            )));
        }
        let mut out = Tensor::zeros(suffix_shape);
        for chunk in self.data.chunks(stride) {
            for (o, &c) in out.data.iter_mut().zip(chunk.iter()) {
                *o += c;
            }
        }
        Ok(out)
    }

    pub fn sum(&self) -> T {
        let mut acc = T::ZERO;
        for &x in &self.data {
            acc += x;
        }
        acc
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// 2-D matrix product.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(Error::shape(format!(
                "matmul requires rank-2 operands, got {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul: inner dims disagree, {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = Tensor::zeros(&[m, n]);
        matmul_into(&self.data, &other.data, m, k, n, &mut out.data);
        Ok(out)
    }

    /// 2-D transpose.
    pub fn transpose2(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::shape(format!(
                "transpose requires rank 2, got {:?}",
                self.shape
            )));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = Tensor::zeros(&[n, m]);
        for i in 0..m {
            for j in 0..n {
                out.data[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(out)
    }

    /// Rectangular sub-block of a rank-2 tensor, rows [r0,r1) x cols [c0,c1).
    pub fn slice2(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::shape(format!(
                "slice2 requires rank 2, got {:?}",
                self.shape
            )));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        if r0 >= r1 || c0 >= c1 || r1 > m || c1 > n {
            return Err(Error::shape(format!(
                "slice2 [{r0}..{r1}, {c0}..{c1}] out of bounds for [{m}, {n}]"
            )));
        }
        let mut out = Tensor::zeros(&[r1 - r0, c1 - c0]);
        let w = c1 - c0;
        for (ri, r) in (r0..r1).enumerate() {
            let src = &self.data[r * n + c0..r * n + c1];
            out.data[ri * w..(ri + 1) * w].copy_from_slice(src);
        }
        Ok(out)
    }
}

/// `out += alpha * g` element-wise (shapes already validated by callers).
pub fn axpy<T: Scalar>(alpha: T, g: &[T], out: &mut [T]) {
    for (o, &x) in out.iter_mut().zip(g.iter()) {
        *o += alpha * x;
    }
}

/// Row-major matrix product kernel, `out = a[m,k] * b[k,n]`.
pub fn matmul_into<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    out.iter_mut().for_each(|x| *x = T::ZERO);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (c, &bv) in crow.iter_mut().zip(brow.iter()) {
                *c += av * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_validates_shape() {
        assert!(Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::from_vec(&[2, 0], vec![]).is_err());
    }

    #[test]
    fn matmul_small() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::from_vec(&[3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[4, 2]);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn broadcast_add_suffix_only() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bias = Tensor::from_vec(&[3], vec![10.0, 20.0, 30.0]).unwrap();
        let out = a.add_broadcast(&bias).unwrap();
        assert_eq!(out.data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        let bad = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        assert!(a.add_broadcast(&bad).is_err());
    }

    #[test]
    fn reduce_is_adjoint_of_broadcast() {
        let g = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let r = g.reduce_to_suffix(&[3]).unwrap();
        assert_eq!(r.data(), &[5.0, 7.0, 9.0]);
    }

    #[test]
    fn slice_and_transpose() {
        let a = Tensor::from_vec(&[3, 3], (1..=9).map(|x| x as f64).collect()).unwrap();
        let s = a.slice2(1, 3, 0, 2).unwrap();
        assert_eq!(s.data(), &[4.0, 5.0, 7.0, 8.0]);
        let t = a.transpose2().unwrap();
        assert_eq!(t.at(&[0, 2]), 7.0);
    }
}

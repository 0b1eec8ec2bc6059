use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Element type for tensors: f32 for training, f64 for verification
/// (gradient checks, oracle comparisons).
pub trait Scalar:
    Copy
    + PartialOrd
    + Debug
    + Display
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    /// Tag written into checkpoint tensor records.
    const DTYPE_TAG: u8;
    const BYTE_WIDTH: usize;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;
    fn maximum(self, other: Self) -> Self;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    /// Activation-grade exponential: the f32 implementation trades the
    /// last few bits for vectorizable arithmetic; f64 (the verification
    /// dtype) stays on the library function.
    fn act_exp(self) -> Self {
        self.exp()
    }

    /// Activation-grade tanh; same accuracy contract as [`Scalar::act_exp`].
    fn act_tanh(self) -> Self {
        self.tanh()
    }
}

/// Polynomial exp for f32: split x*log2(e) into integer and fractional
/// parts, evaluate 2^f with a degree-5 expansion of exp(f ln 2) on
/// [-1/2, 1/2], and assemble the exponent bits directly. Relative error
/// is below 4e-6 across the finite range used by activations.
#[inline]
fn fast_exp_f32(x: f32) -> f32 {
    const LOG2E: f32 = std::f32::consts::LOG2_E;
    const LN2: f32 = std::f32::consts::LN_2;
    // activations never need values outside these clamps
    if x > 88.0 {
        return f32::INFINITY;
    }
    if x < -87.0 {
        return 0.0;
    }
    let t = x * LOG2E;
    let n = t.round();
    let u = (t - n) * LN2;
    let p = 1.0
        + u * (1.0
            + u * (0.5 + u * (0.166_666_67 + u * (0.041_666_668 + u * 0.008_333_334))));
    f32::from_bits(((n as i32 + 127) as u32) << 23) * p
}

#[inline]
fn fast_tanh_f32(x: f32) -> f32 {
    // tanh(x) = 1 - 2 / (exp(2x) + 1), saturating well before bit overflow
    if x > 9.0 {
        return 1.0;
    }
    if x < -9.0 {
        return -1.0;
    }
    1.0 - 2.0 / (fast_exp_f32(2.0 * x) + 1.0)
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const DTYPE_TAG: u8 = 0;
    const BYTE_WIDTH: usize = 4;

    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }
    fn exp(self) -> Self {
        f32::exp(self)
    }
    fn ln(self) -> Self {
        f32::ln(self)
    }
    fn tanh(self) -> Self {
        f32::tanh(self)
    }
    fn abs(self) -> Self {
        f32::abs(self)
    }
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
    fn maximum(self, other: Self) -> Self {
        f32::max(self, other)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
    fn act_exp(self) -> Self {
        fast_exp_f32(self)
    }
    fn act_tanh(self) -> Self {
        fast_tanh_f32(self)
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const DTYPE_TAG: u8 = 1;
    const BYTE_WIDTH: usize = 8;

    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn maximum(self, other: Self) -> Self {
        f64::max(self, other)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes([
            bytes[0], bytes[1], bytes[2], bytes[3], bytes[4], bytes[5], bytes[6], bytes[7],
        ])
    }
}

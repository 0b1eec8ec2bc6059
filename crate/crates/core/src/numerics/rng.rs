use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

/// PCG XSL-RR 128/64 generator ("pcg64").
///
/// Constants are the reference ones: the 128-bit LCG multiplier
/// 0x2360ed051fc65da44385df649fccf645, output = rotr64(hi ^ lo, state >> 122).
/// The same seed yields the same stream on every platform; the u64 stream
/// is integer-only and fully portable.
#[derive(Clone, Debug, PartialEq)]
pub struct Rng {
    state: u128,
    inc: u128,
    cached_normal: Option<f64>,
}

const PCG_MULT: u128 = 0x2360_ed05_1fc6_5da4_4385_df64_9fcc_f645;
const DEFAULT_STREAM: u64 = 0xda3e_39cb_94b9_5bdb;

fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Rng {
    /// Seed with an explicit stream selector.
    pub fn new(seed: u64, stream: u64) -> Self {
        // 128-bit init state expanded from the 64-bit seed via splitmix64.
        let mut s = seed;
        let lo = splitmix64(&mut s);
        let hi = splitmix64(&mut s);
        let initstate = (hi as u128) << 64 | lo as u128;
        let mut rng = Rng {
            state: 0,
            inc: ((stream as u128) << 1) | 1,
            cached_normal: None,
        };
        rng.next_u64();
        rng.state = rng.state.wrapping_add(initstate);
        rng.next_u64();
        rng
    }

    pub fn seeded(seed: u64) -> Self {
        Self::new(seed, DEFAULT_STREAM)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(PCG_MULT).wrapping_add(self.inc);
        let rot = (self.state >> 122) as u32;
        let xored = ((self.state >> 64) as u64) ^ (self.state as u64);
        xored.rotate_right(rot)
    }

    /// Uniform in [0, 1), 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1]; safe as a log argument.
    fn next_open_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased integer in [0, n).
    pub fn gen_range(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        let limit = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < limit {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal via Box-Muller; the paired draw is cached.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = self.next_open_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Normal truncated to two standard deviations (redraw outside).
    pub fn next_trunc_normal(&mut self) -> f64 {
        loop {
            let z = self.next_normal();
            if z.abs() <= 2.0 {
                return z;
            }
        }
    }

    pub fn normal_tensor<T: Scalar>(&mut self, shape: &[usize], mean: f64, std: f64) -> Result<Tensor<T>> {
        if std < 0.0 {
            return Err(Error::config(format!("negative std {std}")));
        }
        let mut t = Tensor::zeros(shape);
        for x in t.data_mut() {
            *x = T::from_f64(mean + std * self.next_normal());
        }
        Ok(t)
    }

    pub fn trunc_normal_tensor<T: Scalar>(&mut self, shape: &[usize], std: f64) -> Tensor<T> {
        let mut t = Tensor::zeros(shape);
        for x in t.data_mut() {
            *x = T::from_f64(std * self.next_trunc_normal());
        }
        t
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<E>(&mut self, items: &mut [E]) {
        for i in (1..items.len()).rev() {
            let j = self.gen_range(i + 1);
            items.swap(i, j);
        }
    }

    /// Independent generator derived from this one's stream.
    pub fn split(&mut self) -> Rng {
        let seed = self.next_u64();
        let stream = self.next_u64();
        Rng::new(seed, stream)
    }

    pub fn state(&self) -> (u128, u128) {
        (self.state, self.inc)
    }

    /// Restore from checkpointed state. The Box-Muller cache is dropped,
    /// so save points must not sit between paired normal draws; the
    /// training loop only checkpoints at epoch boundaries where the cache
    /// is unused.
    pub fn from_state(state: u128, inc: u128) -> Self {
        Rng {
            state,
            inc,
            cached_normal: None,
        }
    }
}

/// Seeded normal tensor draw (the public operation used by initializers).
pub fn rng_normal<T: Scalar>(rng: &mut Rng, shape: &[usize], mean: f64, std: f64) -> Result<Tensor<T>> {
    rng.normal_tensor(shape, mean, std)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::seeded(42);
        let mut b = Rng::seeded(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let ta: Tensor<f64> = Rng::seeded(42).normal_tensor(&[4], 0.0, 1.0).unwrap();
        let tb: Tensor<f64> = Rng::seeded(42).normal_tensor(&[4], 0.0, 1.0).unwrap();
        assert_eq!(ta.data(), tb.data());
    }

    #[test]
    fn zero_std_is_constant_mean() {
        let mut rng = Rng::seeded(7);
        let t: Tensor<f64> = rng.normal_tensor(&[8], 3.5, 0.0).unwrap();
        assert!(t.data().iter().all(|&x| x == 3.5));
    }

    #[test]
    fn negative_std_rejected() {
        let mut rng = Rng::seeded(7);
        assert!(rng.normal_tensor::<f64>(&[2], 0.0, -1.0).is_err());
    }

    #[test]
    fn law_of_large_numbers() {
        let mut rng = Rng::seeded(123);
        let n = 1_000_000usize;
        let (mean, std) = (0.25, 2.0);
        let mut acc = 0.0;
        for _ in 0..n {
            acc += mean + std * rng.next_normal();
        }
        let sample_mean = acc / n as f64;
        let bound = 5.0 * std / (n as f64).sqrt();
        assert!(
            (sample_mean - mean).abs() < bound,
            "sample mean {sample_mean} outside {bound} of {mean}"
        );
    }

    #[test]
    fn state_round_trip() {
        let mut rng = Rng::seeded(9);
        for _ in 0..17 {
            rng.next_u64();
        }
        let (s, i) = rng.state();
        let mut restored = Rng::from_state(s, i);
        assert_eq!(rng.next_u64(), restored.next_u64());
    }

    #[test]
    fn gen_range_bounds() {
        let mut rng = Rng::seeded(5);
        for _ in 0..1000 {
            assert!(rng.gen_range(7) < 7);
        }
    }
}

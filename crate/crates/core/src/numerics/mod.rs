//! Deterministic numeric substrate: dense tensors, complex spectra,
//! real 2-D FFTs with a brute-force oracle, and seeded random generation.

pub mod complex;
pub mod fft;
pub mod rng;
pub mod scalar;
pub mod spatial;
pub mod tensor;

pub use complex::{half_width, ComplexTensor, Spectrum};
pub use fft::{dft2_oracle, fft2_real, irfft2, rfft2};
pub use rng::{rng_normal, Rng};
pub use scalar::Scalar;
pub use tensor::Tensor;

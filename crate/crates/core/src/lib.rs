//! Spectral-gated vision transformers: FFT token mixers and multi-head
//! self-attention under one block stack, with a self-contained tape-based
//! autodiff engine, desk-scale training, analytic parameter/FLOP accounting,
//! and filter-visualization export.

pub mod autodiff;
pub mod blocks;
pub mod data;
pub mod error;
pub mod filters;
pub mod io;
pub mod model;
pub mod numerics;
pub mod training;
pub mod verify;

pub use error::{Error, Result};

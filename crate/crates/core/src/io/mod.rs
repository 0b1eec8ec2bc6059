//! Binary PGM (P5) / PPM (P6) codec: codec-free bit-exact image IO.

pub mod pnm;

pub use pnm::{read_pnm, write_pgm, PnmImage};

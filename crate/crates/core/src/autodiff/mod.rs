//! Tape-based reverse-mode differentiation and the named parameter store.

pub mod check;
pub mod params;
pub mod tape;

pub use check::grad_check;
pub use params::ParamStore;
pub use tape::{Gradients, NodeId, Tape, Value, LAYER_NORM_EPS};

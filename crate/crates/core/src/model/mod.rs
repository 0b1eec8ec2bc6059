//! Model assembly, configuration, and analytic cost accounting.

pub mod build;
pub mod config;
pub mod count;

pub use build::{build_model, forward, forward_rec, make_plan, BlockKind, GateRef, Plan};
pub use config::{
    config_by_name, named_configs, toy_configs, BlockOrder, MixerKind, ModelConfig, ModelKind,
    StageConfig,
};
pub use count::{count_flops, count_params, FlopBreakdown};

//! Loss, AdamW, the warmup+cosine schedule, the epoch loop, evaluation,
//! and bit-exact checkpointing.

pub mod checkpoint;
pub mod optim;
pub mod schedule;
pub mod trainer;

pub use checkpoint::{
    deserialize_checkpoint, load_checkpoint, save_checkpoint, serialize_checkpoint, Checkpoint,
    CheckpointMeta,
};
pub use optim::{adamw_step, OptimState};
pub use schedule::Schedule;
pub use trainer::{
    evaluate, fit, snapshot, topk_indices, EpochRecord, EvalResult, FitOutcome, Summary,
    TrainHyper, TrainReport,
};

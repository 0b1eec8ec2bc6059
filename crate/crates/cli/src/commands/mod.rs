pub mod ablate;
pub mod count;
pub mod eval;
pub mod filters;
pub mod predict;
pub mod train;

pub use ablate::{cmd_ablate, AblateArgs};
pub use count::{cmd_count, CountArgs};
pub use eval::{cmd_eval, EvalArgs};
pub use filters::{cmd_dump_filters, DumpFiltersArgs};
pub use predict::{cmd_predict, PredictArgs};
pub use train::{cmd_train, TrainArgs};

//! Two-stage training (dense backbone, then gated compression), greedy
//! in-environment evaluation, and byte-stable metrics output.

mod eval;
mod losses;
mod metrics;
mod stage;

pub use eval::{argmax, evaluate, EvalConfig, EvalReport};
pub use losses::{action_loss, efficiency_loss, total_loss};
pub use metrics::{metrics_csv, write_metrics_csv, METRICS_HEADER};
pub use stage::{
    init_state, optimized_names, resume_state, train_stage, Stage, StageReport, TrainConfig,
    TrainRecord, TrainState,
};

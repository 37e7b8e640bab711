//! The combined energy/force objective and the optimization loop.

mod eval;
mod loss;
mod optim;
mod trainer;

pub use eval::{evaluate, evaluate_mean_predictor, Metrics};
pub use loss::{batch_loss, combined_loss, LossConfig, Targets};
pub use optim::{adam_step, AdamState, EmaState, LrSchedule};
pub use trainer::{
    loss_and_grads, train, write_metrics_csv, MetricsRow, SelectionMetric, TrainConfig, TrainOutcome, TrainState,
    Trainer, METRICS_HEADER,
};

//! Candidate training, thresholded early-exit inference and evaluation.

mod config;
mod inference;
mod loss;
mod schedule;

pub use config::{TrainConfig, TrainMode};
pub use inference::{
    adaptive_macs, compute_ece, early_exit_inference, evaluate_thresholds, exit_index,
    tune_thresholds, ExitTable, SupportMatrix, ThresholdOutcome, GRID_STEPS,
};
pub use loss::{
    argmax_rows, expected_cost, expected_cost_on, loss_acc, loss_cost, loss_cost_on, loss_joint,
    loss_peak,
};
pub use schedule::{evaluate, train_eenn, EpochRecord, EvaluationResult, TrainedModel};

//! Adam training with plateau LR decay and early stopping, the four-row
//! ablation, and checkpoint inference.

pub mod ablation;
pub mod adam;
pub mod config;
pub mod inference;
pub mod schedule;
pub mod trainer;

pub use ablation::{run_ablation, AblationReport, AblationResult, AblationRow, AblationSpec, Scores};
pub use adam::Adam;
pub use config::{AdamConfig, TrainConfig};
pub use inference::{
    evaluate_source, load_model, predict_slice, read_slice_npy, write_mask_png, write_overlay_png, write_probability_npy, Prediction,
    TimingSummary,
};
pub use schedule::{early_stopping_check, lr_schedule_step, StopDecision, TrainState};
pub use trainer::{batch_gradient, train, validate, EpochReport, StopReason, TrainOutcome};

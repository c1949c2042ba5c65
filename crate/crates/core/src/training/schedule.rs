//! Plateau learning-rate decay and early stopping over the validation loss.
//!
//! Both counters see the same improvement signal but run independently: the
//! LR counter restarts after every decay, the early-stop counter only on
//! improvement.

use serde::{Deserialize, Serialize};

use crate::training::config::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub current_lr: f64,
    /// Decays applied so far; `current_lr = initial_lr · lr_factor^k`.
    pub lr_reductions: u32,
    pub best_val_loss: f64,
    /// Stale epochs seen by early stopping.
    pub epochs_since_improvement: usize,
    /// Stale epochs since the last improvement or decay.
    pub lr_stale_epochs: usize,
    /// Whether the latest epoch improved on the best validation loss.
    pub improved: bool,
    /// Path of the best checkpoint written so far.
    pub checkpoint: Option<String>,
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Self {
        Self {
            epoch: 0,
            current_lr: config.initial_lr,
            lr_reductions: 0,
            best_val_loss: f64::INFINITY,
            epochs_since_improvement: 0,
            lr_stale_epochs: 0,
            improved: false,
            checkpoint: None,
        }
    }
}

/// Feeds one epoch's validation loss into the schedule.
pub fn lr_schedule_step(state: &TrainState, val_loss: f64, config: &TrainConfig) -> TrainState {
    let mut s = state.clone();
    s.epoch += 1;
    s.improved = val_loss < s.best_val_loss - config.min_delta;
    if s.improved {
        s.best_val_loss = val_loss;
        s.epochs_since_improvement = 0;
        s.lr_stale_epochs = 0;
    } else {
        s.epochs_since_improvement += 1;
        s.lr_stale_epochs += 1;
        if s.lr_stale_epochs >= config.lr_patience {
            s.lr_reductions += 1;
            s.current_lr = config.initial_lr * config.lr_factor.powi(s.lr_reductions as i32);
            s.lr_stale_epochs = 0;
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopDecision {
    Continue,
    Stop,
}

pub fn early_stopping_check(state: &TrainState, config: &TrainConfig) -> StopDecision {
    if state.epochs_since_improvement >= config.early_stop_patience {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    }
}

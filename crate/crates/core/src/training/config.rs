use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::network::NetworkConfig;

/// Adam moment decay rates and denominator guard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub initial_lr: f64,
    /// Multiplier applied to the learning rate after `lr_patience` stale epochs.
    pub lr_factor: f64,
    pub lr_patience: usize,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Seed of the per-epoch sample order.
    pub seed: u64,
    /// A validation loss counts as an improvement only when it is below the
    /// best so far by more than this.
    pub min_delta: f64,
    pub adam: AdamConfig,
    /// Stop as soon as validation Dice reaches this value.
    pub target_dice: Option<f64>,
    pub loss: LossConfig,
    pub network: NetworkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 5e-5,
            lr_factor: 0.5,
            lr_patience: 10,
            early_stop_patience: 50,
            max_epochs: 500,
            batch_size: 4,
            seed: 0,
            min_delta: 1e-5,
            adam: AdamConfig::default(),
            target_dice: None,
            loss: LossConfig::focal_tversky(),
            network: NetworkConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Checks this config together with its loss and network sections.
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            p.push(format!("train.lr must be > 0, got {}", self.initial_lr));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            p.push(format!("train.lr_factor must lie in (0, 1], got {}", self.lr_factor));
        }
        if self.lr_patience == 0 {
            p.push("train.lr_patience must be >= 1".into());
        }
        if self.early_stop_patience == 0 {
            p.push("train.early_stop_patience must be >= 1".into());
        }
        if self.max_epochs == 0 {
            p.push("train.max_epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            p.push("train.batch_size must be >= 1".into());
        }
        if !(self.min_delta >= 0.0 && self.min_delta.is_finite()) {
            p.push(format!("train.min_delta must be >= 0, got {}", self.min_delta));
        }
        for (key, b) in [("train.adam_beta1", self.adam.beta1), ("train.adam_beta2", self.adam.beta2)] {
            if !(0.0..1.0).contains(&b) {
                p.push(format!("{key} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam.eps > 0.0) {
            p.push(format!("train.adam_eps must be > 0, got {}", self.adam.eps));
        }
        if let Some(d) = self.target_dice {
            if !(d > 0.0 && d <= 1.0) {
                p.push(format!("train.target_dice must lie in (0, 1], got {d}"));
            }
        }
        for r in [self.loss.validate(), self.network.validate()] {
            if let Err(Error::Config(more)) = r {
                p.extend(more);
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.initial_lr, c.lr_factor, c.lr_patience, c.early_stop_patience), (5e-5, 0.5, 10, 50));
        c.validate().unwrap();
    }

    #[test]
    fn collects_nested_problems() {
        let mut c = TrainConfig { lr_patience: 0, initial_lr: -1.0, ..TrainConfig::default() };
        c.loss.gamma = 9.0;
        c.network.levels = 1;
        let Error::Config(p) = c.validate().unwrap_err() else { panic!() };
        assert!(p.len() >= 4, "{p:?}");
    }
}

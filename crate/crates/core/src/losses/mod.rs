//! Differentiable overlap losses, selected by name through a registry.
//!
//! Built-in entries: `dice` (1 - soft Dice) and `focal_tversky`
//! (`(1 - Tversky)^(1/γ)`). A batch loss is the mean of per-slice losses.

pub mod overlap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Registry;

pub use overlap::{
    dice_loss, dice_loss_grad, dice_score_soft, focal_term, focal_tversky_loss,
    focal_tversky_loss_grad, soft_counts, tversky_index, tversky_index_grad, SoftCounts,
};

pub const DEFAULT_EPSILON: f64 = 1e-7;

/// Loss selection and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Registry name of the loss.
    pub kind: String,
    /// Weight of false negatives in the Tversky index.
    pub alpha: f64,
    /// Weight of false positives in the Tversky index.
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl LossConfig {
    /// Dice loss (`α = β = 0.5`).
    pub fn dice() -> Self {
        Self { kind: "dice".into(), alpha: 0.5, beta: 0.5, gamma: 1.0, epsilon: DEFAULT_EPSILON }
    }

    /// Focal Tversky loss with `α = 0.7, β = 0.3, γ = 4/3`.
    pub fn focal_tversky() -> Self {
        Self {
            kind: "focal_tversky".into(),
            alpha: 0.7,
            beta: 0.3,
            gamma: 4.0 / 3.0,
            epsilon: DEFAULT_EPSILON,
        }
    }

    /// Range checks on the numeric fields; the kind is checked by the registry.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            problems.push(format!("loss.alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            problems.push(format!("loss.beta must be finite and >= 0, got {}", self.beta));
        }
        if !(1.0..=3.0).contains(&self.gamma) {
            problems.push(format!("loss.gamma must lie in [1, 3], got {}", self.gamma));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            problems.push(format!("loss.epsilon must be > 0, got {}", self.epsilon));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self::focal_tversky()
    }
}

/// A per-slice segmentation loss over flattened probability maps.
pub trait SegmentationLoss: Send + Sync {
    fn name(&self) -> &str;

    fn loss(&self, pred: &[f64], target: &[f64]) -> Result<f64>;

    /// Loss and its gradient with respect to `pred`.
    fn loss_and_grad(&self, pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)>;
}

#[derive(Debug, Clone)]
pub struct DiceLoss {
    pub epsilon: f64,
}

impl SegmentationLoss for DiceLoss {
    fn name(&self) -> &str {
        "dice"
    }

    fn loss(&self, pred: &[f64], target: &[f64]) -> Result<f64> {
        dice_loss(pred, target, self.epsilon)
    }

    fn loss_and_grad(&self, pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        dice_loss_grad(pred, target, self.epsilon)
    }
}

#[derive(Debug, Clone)]
pub struct FocalTverskyLoss {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl SegmentationLoss for FocalTverskyLoss {
    fn name(&self) -> &str {
        "focal_tversky"
    }

    fn loss(&self, pred: &[f64], target: &[f64]) -> Result<f64> {
        focal_tversky_loss(pred, target, self.alpha, self.beta, self.gamma, self.epsilon)
    }

    fn loss_and_grad(&self, pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        focal_tversky_loss_grad(pred, target, self.alpha, self.beta, self.gamma, self.epsilon)
    }
}

pub type LossFactory = fn(&LossConfig) -> Result<Box<dyn SegmentationLoss>>;

/// Registry holding the built-in losses.
pub fn loss_registry() -> Registry<LossFactory> {
    let mut r: Registry<LossFactory> = Registry::new("loss");
    r.register("dice", |c: &LossConfig| {
        Ok(Box::new(DiceLoss { epsilon: c.epsilon }) as Box<dyn SegmentationLoss>)
    })
    .expect("fresh registry");
    r.register("focal_tversky", |c: &LossConfig| {
        Ok(Box::new(FocalTverskyLoss {
            alpha: c.alpha,
            beta: c.beta,
            gamma: c.gamma,
            epsilon: c.epsilon,
        }) as Box<dyn SegmentationLoss>)
    })
    .expect("fresh registry");
    r
}

/// Validates `config` and instantiates the loss it names.
pub fn build_loss(config: &LossConfig) -> Result<Box<dyn SegmentationLoss>> {
    config.validate()?;
    let registry = loss_registry();
    let factory = registry.get(&config.kind)?;
    factory(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows_balance_fp_and_fn_weights() {
        for c in [LossConfig::dice(), LossConfig::focal_tversky()] {
            assert!((c.alpha + c.beta - 1.0).abs() < 1e-15);
            c.validate().unwrap();
        }
    }

    #[test]
    fn registry_builds_by_name() {
        let dl = build_loss(&LossConfig::dice()).unwrap();
        assert_eq!(dl.name(), "dice");
        let ftl = build_loss(&LossConfig::focal_tversky()).unwrap();
        assert_eq!(ftl.name(), "focal_tversky");
        let unknown = LossConfig { kind: "hinge".into(), ..LossConfig::dice() };
        let msg = build_loss(&unknown).err().unwrap().to_string();
        assert!(msg.contains("dice, focal_tversky"), "{msg}");
    }

    #[test]
    fn invalid_config_lists_everything() {
        let c = LossConfig { alpha: -1.0, gamma: 5.0, epsilon: 0.0, ..LossConfig::dice() };
        let Error::Config(problems) = c.validate().unwrap_err() else { panic!() };
        assert_eq!(problems.len(), 3);
    }

    #[test]
    fn trait_objects_agree_with_free_functions() {
        let pred = [0.2, 0.9, 0.4, 0.7];
        let target = [0.0, 1.0, 1.0, 0.0];
        let ftl = build_loss(&LossConfig::focal_tversky()).unwrap();
        let (l, g) = ftl.loss_and_grad(&pred, &target).unwrap();
        assert_eq!(l, ftl.loss(&pred, &target).unwrap());
        assert_eq!(g.len(), 4);
    }
}

//! Thresholded evaluation: Dice, sensitivity and specificity from pixel
//! confusion counts.
//!
//! Empty denominators score 1.0: a slice with no lesion and no predicted
//! lesion has perfect Dice; with no positives there is nothing to miss
//! (sensitivity); with no negatives there is nothing to over-segment
//! (specificity). Split-level figures are unweighted means over slices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn as_bit(v: f64, what: &str) -> Result<bool> {
    if v == 0.0 {
        Ok(false)
    } else if v == 1.0 {
        Ok(true)
    } else {
        Err(Error::InvalidInput(format!("{what} value {v} is not binary")))
    }
}

/// Exact pixel counts of two binary masks.
pub fn confusion_counts(pred: &[f64], target: &[f64]) -> Result<ConfusionCounts> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction has {} pixels, target has {}",
            pred.len(),
            target.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.iter().zip(target) {
        match (as_bit(p, "prediction")?, as_bit(g, "target")?) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `2TP / (2TP + FP + FN)`.
pub fn dice_metric(c: &ConfusionCounts) -> f64 {
    let den = 2 * c.tp + c.fp + c.fn_;
    if den == 0 {
        1.0
    } else {
        (2 * c.tp) as f64 / den as f64
    }
}

/// `TP / (TP + FN)`.
pub fn sensitivity(c: &ConfusionCounts) -> f64 {
    let den = c.tp + c.fn_;
    if den == 0 {
        1.0
    } else {
        c.tp as f64 / den as f64
    }
}

/// `TN / (TN + FP)`.
pub fn specificity(c: &ConfusionCounts) -> f64 {
    let den = c.tn + c.fp;
    if den == 0 {
        1.0
    } else {
        c.tn as f64 / den as f64
    }
}

/// Metrics of one slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub dice: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub counts: ConfusionCounts,
}

impl SliceMetrics {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        Self {
            dice: dice_metric(&counts),
            sensitivity: sensitivity(&counts),
            specificity: specificity(&counts),
            counts,
        }
    }
}

/// Binarizes `prob` (`p > threshold` is lesion) and scores it.
pub fn evaluate_slice(prob: &[f64], target: &[f64], threshold: f64) -> Result<SliceMetrics> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidInput(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    if let Some(p) = prob.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!("probability {p} outside [0, 1]")));
    }
    let binary = binarize(prob, threshold);
    Ok(SliceMetrics::from_counts(confusion_counts(&binary, target)?))
}

pub fn binarize(prob: &[f64], threshold: f64) -> Vec<f64> {
    prob.iter().map(|&p| if p > threshold { 1.0 } else { 0.0 }).collect()
}

/// Per-slice rows plus their unweighted means.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub slices: Vec<(String, SliceMetrics)>,
    pub mean_dice: f64,
    pub mean_sensitivity: f64,
    pub mean_specificity: f64,
}

impl MetricReport {
    pub fn from_slices(slices: Vec<(String, SliceMetrics)>) -> Self {
        let n = slices.len().max(1) as f64;
        let mean = |f: fn(&SliceMetrics) -> f64| slices.iter().map(|(_, m)| f(m)).sum::<f64>() / n;
        Self {
            mean_dice: mean(|m| m.dice),
            mean_sensitivity: mean(|m| m.sensitivity),
            mean_specificity: mean(|m| m.specificity),
            slices,
        }
    }

    /// Plain-text table: one row per slice, then the mean.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<32} {:>8} {:>8} {:>8} {:>10} {:>10} {:>10} {:>10}\n",
            "slice", "dice", "sens", "spec", "tp", "fp", "fn", "tn"
        );
        for (id, m) in &self.slices {
            out.push_str(&format!(
                "{:<32} {:>8.4} {:>8.4} {:>8.4} {:>10} {:>10} {:>10} {:>10}\n",
                id, m.dice, m.sensitivity, m.specificity, m.counts.tp, m.counts.fp, m.counts.fn_, m.counts.tn
            ));
        }
        out.push_str(&format!(
            "{:<32} {:>8.4} {:>8.4} {:>8.4}\n",
            format!("mean ({} slices)", self.slices.len()),
            self.mean_dice,
            self.mean_sensitivity,
            self.mean_specificity
        ));
        out
    }
}

//! Per-slice intensity normalization and label merging.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest label in the annotation volumes (ground-glass, consolidation,
/// pleural effusion).
pub const MAX_LABEL: f64 = 3.0;

/// Min-max maps the slice onto `[0, 1]`; a constant slice becomes all zeros.
pub fn normalize_intensity(slice: &Tensor) -> Result<Tensor> {
    if !slice.is_finite() {
        return Err(Error::NonFinite("slice intensities contain NaN or infinity".into()));
    }
    let (lo, hi) = slice
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if slice.is_empty() || hi == lo {
        return Ok(Tensor::zeros(slice.shape()));
    }
    let range = hi - lo;
    Ok(slice.map(|v| ((v - lo) / range).clamp(0.0, 1.0)))
}

/// Every lesion label becomes 1, background stays 0.
pub fn merge_labels(mask: &Tensor) -> Result<Tensor> {
    if let Some(v) = mask.data().iter().find(|&&v| !(v.fract() == 0.0 && (0.0..=MAX_LABEL).contains(&v))) {
        return Err(Error::InvalidInput(format!(
            "unexpected label value {v} (expected one of 0, 1, 2, 3)"
        )));
    }
    Ok(mask.map(|v| if v > 0.0 { 1.0 } else { 0.0 }))
}

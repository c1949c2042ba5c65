//! Soft overlap scores and the losses built on them, with analytic gradients
//! with respect to the predicted probabilities.
//!
//! With `p` the lesion probability, `g` the binary target and `ε` the
//! smoothing constant:
//!
//! * soft Dice `D = (2 Σ p g + ε) / (Σ p + Σ g + ε)`
//! * Tversky `T = (Σ p g + ε) / (Σ p g + α Σ (1-p) g + β Σ p (1-g) + ε)`
//! * focal Tversky `(1 - T)^(1/γ)`
//!
//! The background probability is the complement `1 - p`.

use crate::error::{Error, Result};

/// Soft confusion sums of one prediction/target pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftCounts {
    /// `Σ p g`
    pub tp: f64,
    /// `Σ (1 - p) g`
    pub fn_: f64,
    /// `Σ p (1 - g)`
    pub fp: f64,
    /// `Σ p`
    pub pred_sum: f64,
    /// `Σ g`
    pub target_sum: f64,
}

pub(crate) fn check_pair(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction has {} values, target has {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("empty prediction".into()));
    }
    if let Some(p) = pred.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!("prediction {p} outside [0, 1]")));
    }
    if let Some(g) = target.iter().find(|&&g| g != 0.0 && g != 1.0) {
        return Err(Error::InvalidInput(format!("target value {g} is not binary")));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

pub fn soft_counts(pred: &[f64], target: &[f64]) -> Result<SoftCounts> {
    check_pair(pred, target)?;
    let mut c = SoftCounts { tp: 0.0, fn_: 0.0, fp: 0.0, pred_sum: 0.0, target_sum: 0.0 };
    for (&p, &g) in pred.iter().zip(target) {
        c.tp += p * g;
        c.fn_ += (1.0 - p) * g;
        c.fp += p * (1.0 - g);
        c.pred_sum += p;
        c.target_sum += g;
    }
    Ok(c)
}

pub fn dice_score_soft(pred: &[f64], target: &[f64], epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let c = soft_counts(pred, target)?;
    Ok((2.0 * c.tp + epsilon) / (c.pred_sum + c.target_sum + epsilon))
}

pub fn dice_loss(pred: &[f64], target: &[f64], epsilon: f64) -> Result<f64> {
    Ok(1.0 - dice_score_soft(pred, target, epsilon)?)
}

/// Dice loss and its gradient with respect to `pred`.
pub fn dice_loss_grad(pred: &[f64], target: &[f64], epsilon: f64) -> Result<(f64, Vec<f64>)> {
    check_epsilon(epsilon)?;
    let c = soft_counts(pred, target)?;
    let num = 2.0 * c.tp + epsilon;
    let den = c.pred_sum + c.target_sum + epsilon;
    let grad = target.iter().map(|&g| -(2.0 * g * den - num) / (den * den)).collect();
    Ok((1.0 - num / den, grad))
}

fn check_weights(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "alpha and beta must be finite and >= 0, got {alpha}, {beta}"
        )));
    }
    Ok(())
}

pub fn tversky_index(
    pred: &[f64],
    target: &[f64],
    alpha: f64,
    beta: f64,
    epsilon: f64,
) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_weights(alpha, beta)?;
    let c = soft_counts(pred, target)?;
    Ok((c.tp + epsilon) / (c.tp + alpha * c.fn_ + beta * c.fp + epsilon))
}

/// Tversky index and its gradient with respect to `pred`.
pub fn tversky_index_grad(
    pred: &[f64],
    target: &[f64],
    alpha: f64,
    beta: f64,
    epsilon: f64,
) -> Result<(f64, Vec<f64>)> {
    check_epsilon(epsilon)?;
    check_weights(alpha, beta)?;
    let c = soft_counts(pred, target)?;
    let num = c.tp + epsilon;
    let den = c.tp + alpha * c.fn_ + beta * c.fp + epsilon;
    let grad = target
        .iter()
        .map(|&g| {
            let dden = g - alpha * g + beta * (1.0 - g);
            (g * den - num * dden) / (den * den)
        })
        .collect();
    Ok((num / den, grad))
}

/// `(1 - ti)^(1/γ)`; exactly `1 - ti` when `γ = 1`.
pub fn focal_term(ti: f64, gamma: f64) -> f64 {
    let base = (1.0 - ti).max(0.0);
    if gamma == 1.0 {
        base
    } else {
        base.powf(1.0 / gamma)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!("gamma must be >= 1, got {gamma}")));
    }
    Ok(())
}

pub fn focal_tversky_loss(
    pred: &[f64],
    target: &[f64],
    alpha: f64,
    beta: f64,
    gamma: f64,
    epsilon: f64,
) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(focal_term(tversky_index(pred, target, alpha, beta, epsilon)?, gamma))
}

/// Focal Tversky loss and its gradient with respect to `pred`.
///
/// `d/dT (1-T)^(1/γ)` is unbounded as `T → 1` for `γ > 1`; the base is
/// floored at machine epsilon there.
pub fn focal_tversky_loss_grad(
    pred: &[f64],
    target: &[f64],
    alpha: f64,
    beta: f64,
    gamma: f64,
    epsilon: f64,
) -> Result<(f64, Vec<f64>)> {
    check_gamma(gamma)?;
    let (ti, dti) = tversky_index_grad(pred, target, alpha, beta, epsilon)?;
    let loss = focal_term(ti, gamma);
    let base = (1.0 - ti).max(f64::EPSILON);
    let outer = -(1.0 / gamma) * base.powf(1.0 / gamma - 1.0);
    Ok((loss, dti.into_iter().map(|d| outer * d).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = 1e-7;

    #[test]
    fn dice_edge_cases() {
        let t = [1.0, 0.0, 1.0, 1.0];
        assert!((dice_score_soft(&t, &t, EPS).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(dice_score_soft(&[0.0; 4], &[0.0; 4], EPS).unwrap(), 1.0);
        let d = dice_score_soft(&[1.0, 0.0], &[0.0, 1.0], EPS).unwrap();
        assert!((d - EPS / (2.0 + EPS)).abs() < 1e-18);
    }

    #[test]
    fn dice_loss_values() {
        assert_eq!(dice_loss(&[1.0, 0.0], &[1.0, 0.0], EPS).unwrap(), 0.0);
        assert!((dice_loss(&[1.0, 0.0], &[0.0, 1.0], EPS).unwrap() - 1.0).abs() < 1e-7);
        let dl = dice_loss(&[0.5; 4], &[1.0, 1.0, 0.0, 0.0], EPS).unwrap();
        assert!((dl - (1.0 - (2.0 + EPS) / (4.0 + EPS))).abs() < 1e-15);
        assert!((dl - 0.5).abs() < 1e-7);
    }

    #[test]
    fn tversky_values() {
        // soft TP = 2, FN = 1, FP = 1
        let pred = [1.0, 1.0, 0.0, 1.0];
        let target = [1.0, 1.0, 1.0, 0.0];
        let ti = tversky_index(&pred, &target, 0.7, 0.3, EPS).unwrap();
        assert!((ti - 2.0 / 3.0).abs() < 1e-7);
        assert!((tversky_index(&target, &target, 0.7, 0.3, EPS).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn focal_values() {
        assert!((focal_term(2.0 / 3.0, 4.0 / 3.0) - 0.438_691_337_650_83).abs() < 1e-12);
        assert_eq!(focal_term(0.25, 1.0), 0.75);
        let t = [0.0, 1.0, 1.0];
        assert_eq!(focal_tversky_loss(&t, &t, 0.7, 0.3, 4.0 / 3.0, EPS).unwrap(), 0.0);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(matches!(dice_loss(&[0.5], &[1.0, 0.0], EPS), Err(Error::Shape(_))));
        assert!(dice_loss(&[1.5], &[1.0], EPS).is_err());
        assert!(dice_loss(&[0.5], &[0.5], EPS).is_err());
        assert!(dice_loss(&[0.5], &[1.0], 0.0).is_err());
        assert!(focal_tversky_loss(&[0.5], &[1.0], 0.7, 0.3, 0.5, EPS).is_err());
        assert!(tversky_index(&[0.5], &[1.0], -0.1, 0.3, EPS).is_err());
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(0.0f64..=1.0, n),
                prop::collection::vec(prop::bool::ANY.prop_map(|b| b as u8 as f64), n),
            )
        })
    }

    proptest! {
        #[test]
        fn symmetric_tversky_is_dice((pred, target) in arb_pair()) {
            // Doubling numerator and denominator of T(½, ½, ε) gives
            // (2 Σpg + 2ε) / (Σp + Σg + 2ε): soft Dice with smoothing 2ε.
            let ti = tversky_index(&pred, &target, 0.5, 0.5, EPS).unwrap();
            let d = dice_score_soft(&pred, &target, 2.0 * EPS).unwrap();
            prop_assert!((ti - d).abs() < 1e-12);
            // With equal smoothing the two differ by less than ε / (Σp + Σg).
            let d_same = dice_score_soft(&pred, &target, EPS).unwrap();
            let c = soft_counts(&pred, &target).unwrap();
            prop_assert!((ti - d_same).abs() <= EPS / (c.pred_sum + c.target_sum).max(EPS) + 1e-15);
        }

        #[test]
        fn unit_gamma_is_one_minus_index((pred, target) in arb_pair()) {
            let ti = tversky_index(&pred, &target, 0.7, 0.3, EPS).unwrap();
            let ftl = focal_tversky_loss(&pred, &target, 0.7, 0.3, 1.0, EPS).unwrap();
            prop_assert_eq!(ftl, 1.0 - ti);
        }

        #[test]
        fn focal_term_decreases_in_index(a in 0.0f64..1.0, b in 0.0f64..1.0, gamma in 1.0f64..3.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(focal_term(hi, gamma) <= focal_term(lo, gamma));
        }

        #[test]
        fn losses_are_non_negative((pred, target) in arb_pair()) {
            prop_assert!(dice_loss(&pred, &target, EPS).unwrap() >= 0.0);
            prop_assert!(focal_tversky_loss(&pred, &target, 0.7, 0.3, 4.0/3.0, EPS).unwrap() >= 0.0);
        }

        #[test]
        fn binary_losses_vanish_only_on_exact_match(
            (a, b) in (1usize..20).prop_flat_map(|n| (
                prop::collection::vec(prop::bool::ANY, n),
                prop::collection::vec(prop::bool::ANY, n),
            ))
        ) {
            let pred: Vec<f64> = a.iter().map(|&x| x as u8 as f64).collect();
            let target: Vec<f64> = b.iter().map(|&x| x as u8 as f64).collect();
            let dl = dice_loss(&pred, &target, EPS).unwrap();
            let ftl = focal_tversky_loss(&pred, &target, 0.7, 0.3, 4.0/3.0, EPS).unwrap();
            if a == b {
                prop_assert!(dl.abs() < 1e-12 && ftl.abs() < 1e-6);
            } else {
                prop_assert!(dl > 1e-3 && ftl > 1e-3);
            }
        }

        #[test]
        fn heavier_false_negative_weight_never_raises_index(
            (pred, target) in arb_pair(), a1 in 0.0f64..=1.0, a2 in 0.0f64..=1.0,
        ) {
            let c = soft_counts(&pred, &target).unwrap();
            prop_assume!(c.fn_ > 0.0);
            let (lo, hi) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
            // With beta = 1 - alpha the index only drops when FN outweighs FP.
            prop_assume!(c.fn_ >= c.fp);
            let t_lo = tversky_index(&pred, &target, lo, 1.0 - lo, EPS).unwrap();
            let t_hi = tversky_index(&pred, &target, hi, 1.0 - hi, EPS).unwrap();
            prop_assert!(t_hi <= t_lo + 1e-15);
        }
    }
}

//! Receptive field of a stack of stride-1 dilated convolutions.
//!
//! A `k×k` kernel with dilation `l` spans `(k-1)·l + 1` pixels, so each layer
//! grows the receptive field side by `(k-1)·l`. For `k = 3` and dilations
//! `1, 2, 4, ..., 2^m` the side is `2^(m+2) - 1`.

use serde::Serialize;

use crate::error::{Error, Result};

/// One row of the per-layer receptive-field table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerField {
    pub layer: usize,
    pub dilation: usize,
    /// Side of the dilated kernel footprint.
    pub kernel_span: usize,
    /// Receptive-field side after this layer.
    pub cumulative: usize,
}

pub fn receptive_field_table(dilations: &[usize], kernel: usize) -> Result<Vec<LayerField>> {
    if dilations.is_empty() {
        return Err(Error::InvalidInput("dilation list is empty".into()));
    }
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("kernel size must be odd, got {kernel}")));
    }
    if let Some(bad) = dilations.iter().find(|&&d| d == 0) {
        return Err(Error::InvalidInput(format!("dilation must be >= 1, got {bad}")));
    }
    let mut side = 1;
    Ok(dilations
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            side += (kernel - 1) * d;
            LayerField { layer: i + 1, dilation: d, kernel_span: (kernel - 1) * d + 1, cumulative: side }
        })
        .collect())
}

/// Side length of the receptive field after all layers.
pub fn compute_receptive_field(dilations: &[usize], kernel: usize) -> Result<usize> {
    Ok(receptive_field_table(dilations, kernel)?.last().map_or(1, |l| l.cumulative))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::kernels::conv2d_forward;
    use crate::tensor::Tensor;

    /// Pushes a unit impulse through real all-ones dilated convolutions and
    /// measures the extent of the non-zero support (which has holes for
    /// dilations > 1).
    fn impulse_support(dilations: &[usize]) -> usize {
        let n = 81;
        let mut x = Tensor::zeros(&[1, n, n]);
        x.data_mut()[(n / 2) * n + n / 2] = 1.0;
        let ones = Tensor::full(&[1, 1, 3, 3], 1.0);
        for &d in dilations {
            x = conv2d_forward(&x, &ones, None, 1, d).unwrap();
        }
        let centre_row = &x.data()[(n / 2) * n..(n / 2 + 1) * n];
        let first = centre_row.iter().position(|&v| v != 0.0).unwrap();
        let last = centre_row.iter().rposition(|&v| v != 0.0).unwrap();
        last - first + 1
    }

    #[test]
    fn stated_values() {
        assert_eq!(compute_receptive_field(&[1, 2, 4], 3).unwrap(), 15);
        assert_eq!(compute_receptive_field(&[1, 1, 1], 3).unwrap(), 7);
        assert_eq!(compute_receptive_field(&[2, 4], 3).unwrap(), 13);
    }

    #[test]
    fn matches_impulse_oracle() {
        for dilations in [vec![1, 2, 4], vec![1, 1, 1], vec![2, 4], vec![3], vec![1, 2, 4, 8]] {
            assert_eq!(
                compute_receptive_field(&dilations, 3).unwrap(),
                impulse_support(&dilations),
                "{dilations:?}"
            );
        }
    }

    #[test]
    fn exponential_dilations_give_closed_form() {
        for k in 0..=4u32 {
            let dilations: Vec<usize> = (0..=k).map(|i| 1 << i).collect();
            assert_eq!(compute_receptive_field(&dilations, 3).unwrap(), (1 << (k + 2)) - 1);
        }
    }

    #[test]
    fn table_lists_each_layer() {
        let t = receptive_field_table(&[1, 2, 4], 3).unwrap();
        let cum: Vec<_> = t.iter().map(|l| l.cumulative).collect();
        assert_eq!(cum, vec![3, 7, 15]);
        assert_eq!(t[2].kernel_span, 9);
    }

    #[test]
    fn rejects_invalid_lists() {
        assert!(compute_receptive_field(&[], 3).is_err());
        assert!(compute_receptive_field(&[1, 0], 3).is_err());
        assert!(compute_receptive_field(&[1], 2).is_err());
    }
}

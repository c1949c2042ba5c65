//! Slice resampling kernels, selected by name.
//!
//! Both kernels use half-pixel centres: output pixel `i` of `n_out` samples
//! the input at `(i + 0.5) · n_in / n_out - 0.5`.

use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::tensor::Tensor;

pub(crate) fn slice_dims(t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [h, w] => Ok((h, w)),
        ref s => Err(Error::Shape(format!("expected an H×W slice, got shape {s:?}"))),
    }
}

/// A 2-D resampling kernel.
pub trait Interpolator: Send + Sync {
    fn name(&self) -> &str;

    /// Resamples an `[H, W]` slice to `[target.0, target.1]`.
    fn resample(&self, slice: &Tensor, target: (usize, usize)) -> Result<Tensor>;
}

fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    (i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5
}

/// Separable linear interpolation; exact on constant and affine inputs.
#[derive(Debug, Clone, Copy)]
pub struct Bilinear;

impl Interpolator for Bilinear {
    fn name(&self) -> &str {
        "bilinear"
    }

    fn resample(&self, slice: &Tensor, (th, tw): (usize, usize)) -> Result<Tensor> {
        let (h, w) = slice_dims(slice)?;
        // (lower index, upper index, weight of upper)
        let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
            (0..n_out)
                .map(|i| {
                    let s = source_coord(i, n_in, n_out).clamp(0.0, (n_in - 1) as f64);
                    let lo = s.floor() as usize;
                    let hi = (lo + 1).min(n_in - 1);
                    (lo, hi, s - lo as f64)
                })
                .collect()
        };
        let (rows, cols) = (taps(h, th), taps(w, tw));
        let src = slice.data();
        let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
        let mut out = Vec::with_capacity(th * tw);
        for &(r0, r1, ty) in &rows {
            for &(c0, c1, tx) in &cols {
                let top = lerp(src[r0 * w + c0], src[r0 * w + c1], tx);
                let bottom = lerp(src[r1 * w + c0], src[r1 * w + c1], tx);
                out.push(lerp(top, bottom, ty));
            }
        }
        Tensor::from_vec(&[th, tw], out)
    }
}

/// Nearest-neighbour lookup; never produces a value absent from the input.
#[derive(Debug, Clone, Copy)]
pub struct Nearest;

impl Interpolator for Nearest {
    fn name(&self) -> &str {
        "nearest"
    }

    fn resample(&self, slice: &Tensor, (th, tw): (usize, usize)) -> Result<Tensor> {
        let (h, w) = slice_dims(slice)?;
        let pick = |n_in: usize, n_out: usize| -> Vec<usize> {
            (0..n_out)
                .map(|i| (((i as f64 + 0.5) * n_in as f64 / n_out as f64) as usize).min(n_in - 1))
                .collect()
        };
        let (rows, cols) = (pick(h, th), pick(w, tw));
        let src = slice.data();
        let out = rows
            .iter()
            .flat_map(|&r| cols.iter().map(move |&c| src[r * w + c]))
            .collect();
        Tensor::from_vec(&[th, tw], out)
    }
}

pub fn interpolator_registry() -> Registry<Box<dyn Interpolator>> {
    let mut r: Registry<Box<dyn Interpolator>> = Registry::new("interpolation kernel");
    r.register("bilinear", Box::new(Bilinear)).expect("fresh registry");
    r.register("nearest", Box::new(Nearest)).expect("fresh registry");
    r
}

/// Resamples `slice` to `target` with `kernel`; a slice already at the target
/// size is returned unchanged.
pub fn resample_slice(slice: &Tensor, target: (usize, usize), kernel: &dyn Interpolator) -> Result<Tensor> {
    let (h, w) = slice_dims(slice)?;
    if h < 2 || w < 2 {
        return Err(Error::InvalidInput(format!("cannot resample a degenerate {h}×{w} slice")));
    }
    if target.0 == 0 || target.1 == 0 {
        return Err(Error::InvalidInput(format!("target size {target:?} is empty")));
    }
    if (h, w) == target {
        return Ok(slice.clone());
    }
    kernel.resample(slice, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn same_size_is_bitwise_identity() {
        let t = Tensor::from_vec(&[2, 3], vec![0.1, 0.2, 0.3, 1e-300, -0.0, 7.0]).unwrap();
        for name in ["bilinear", "nearest"] {
            let r = interpolator_registry();
            let out = resample_slice(&t, (2, 3), r.get(name).unwrap().as_ref()).unwrap();
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&out), bits(&t));
        }
    }

    #[test]
    fn constant_stays_constant() {
        let t = Tensor::full(&[63, 63], 0.3719);
        let out = resample_slice(&t, (51, 51), &Bilinear).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.3719));
    }

    #[test]
    fn bilinear_reproduces_interior_ramp() {
        // f(i) = i sampled at half-pixel centres maps to the same line
        let t = Tensor::from_vec(&[2, 4], (0..8).map(|i| (i % 4) as f64).collect()).unwrap();
        let out = resample_slice(&t, (2, 8), &Bilinear).unwrap();
        let row: Vec<f64> = out.data()[..8].to_vec();
        let expect = [0.0, 0.25, 0.75, 1.25, 1.75, 2.25, 2.75, 3.0];
        for (a, b) in row.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{row:?}");
        }
    }

    #[test]
    fn nearest_downsample_picks_expected_pixels() {
        let t = Tensor::from_vec(&[2, 4], vec![0., 1., 2., 3., 4., 5., 6., 7.]).unwrap();
        let out = resample_slice(&t, (2, 2), &Nearest).unwrap();
        assert_eq!(out.data(), &[1., 3., 5., 7.]);
    }

    #[test]
    fn errors() {
        assert!(resample_slice(&Tensor::zeros(&[1, 5]), (4, 4), &Bilinear).is_err());
        assert!(resample_slice(&Tensor::zeros(&[3, 5, 5]), (4, 4), &Bilinear).is_err());
        assert!(resample_slice(&Tensor::zeros(&[5, 5]), (0, 4), &Nearest).is_err());
        let msg = interpolator_registry().get("bicubic").err().unwrap().to_string();
        assert!(msg.contains("bilinear, nearest"), "{msg}");
    }

    proptest! {
        #[test]
        fn nearest_preserves_label_set(
            (h, w, labels) in (2usize..40, 2usize..40).prop_flat_map(|(h, w)| {
                (Just(h), Just(w), prop::collection::vec(0u8..4, h * w))
            }),
            th in 1usize..50,
            tw in 1usize..50,
        ) {
            let t = Tensor::from_vec(&[h, w], labels.iter().map(|&l| l as f64).collect()).unwrap();
            let out = resample_slice(&t, (th, tw), &Nearest).unwrap();
            prop_assert_eq!(out.shape(), &[th, tw]);
            for v in out.data() {
                prop_assert!(labels.contains(&(*v as u8)) && v.fract() == 0.0);
            }
        }

        #[test]
        fn bilinear_stays_within_input_range(
            data in prop::collection::vec(-5.0f64..5.0, 36),
            th in 2usize..20,
        ) {
            let t = Tensor::from_vec(&[6, 6], data.clone()).unwrap();
            let out = resample_slice(&t, (th, th + 1), &Bilinear).unwrap();
            let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for &v in out.data() {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}

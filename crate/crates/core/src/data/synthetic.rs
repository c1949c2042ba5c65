//! Synthetic "CT slices" with elliptical lesions, for tests and desk-scale
//! sanity runs.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::preprocess::normalize_intensity;
use crate::data::store::SliceSample;
use crate::tensor::Tensor;

/// Raw slice in HU-like units plus a label map with values in `{0, 1, 2, 3}`.
pub fn synthetic_raw_slice(rng: &mut ChaCha8Rng, h: usize, w: usize, lesions: usize) -> (Vec<f32>, Vec<f32>) {
    let noise = Normal::new(0.0, 20.0).expect("valid std");
    let mut image: Vec<f32> = (0..h * w)
        .map(|idx| {
            let (i, j) = ((idx / w) as f64 / h as f64, (idx % w) as f64 / w as f64);
            let body = if (i - 0.5).powi(2) + (j - 0.5).powi(2) < 0.2 { -700.0 } else { -1000.0 };
            (body + noise.sample(rng)) as f32
        })
        .collect();
    let mut labels = vec![0.0f32; h * w];
    for _ in 0..lesions {
        let (ci, cj) = (rng.random_range(0.3..0.7) * h as f64, rng.random_range(0.3..0.7) * w as f64);
        let (ri, rj) = (rng.random_range(0.06..0.14) * h as f64, rng.random_range(0.06..0.14) * w as f64);
        let label = rng.random_range(1..=3) as f32;
        for i in 0..h {
            for j in 0..w {
                let d = ((i as f64 - ci) / ri).powi(2) + ((j as f64 - cj) / rj).powi(2);
                if d <= 1.0 {
                    labels[i * w + j] = label;
                    image[i * w + j] = (-150.0 + noise.sample(rng)) as f32;
                }
            }
        }
    }
    (image, labels)
}

/// `n` normalized samples of size `size×size`, each with one or two lesions.
pub fn synthetic_blobs(n: usize, size: usize, seed: u64) -> Vec<SliceSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let lesions = 1 + k % 2;
            let (image, labels) = synthetic_raw_slice(&mut rng, size, size, lesions);
            let image = Tensor::from_vec(&[size, size], image.into_iter().map(f64::from).collect())
                .expect("size×size");
            SliceSample {
                image: normalize_intensity(&image).expect("finite"),
                mask: Tensor::from_vec(
                    &[size, size],
                    labels.into_iter().map(|l| if l > 0.0 { 1.0 } else { 0.0 }).collect(),
                )
                .expect("size×size"),
                source_id: "synthetic".into(),
                volume_index: 0,
                slice_index: k,
            }
        })
        .collect()
}

/// Raw image and label stacks `[slices, h, w]`. Slices listed in `empty`
/// carry no lesion.
pub fn synthetic_volume(slices: usize, h: usize, w: usize, empty: &[usize], seed: u64) -> (Array3<f32>, Array3<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut image = Array3::zeros((slices, h, w));
    let mut mask = Array3::zeros((slices, h, w));
    for k in 0..slices {
        let lesions = if empty.contains(&k) { 0 } else { 1 };
        let (img, lab) = synthetic_raw_slice(&mut rng, h, w, lesions);
        for (idx, (v, l)) in img.into_iter().zip(lab).enumerate() {
            image[[k, idx / w, idx % w]] = v;
            mask[[k, idx / w, idx % w]] = l;
        }
    }
    (image, mask)
}

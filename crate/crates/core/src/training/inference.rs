//! Checkpoint inference, split evaluation and output files.

use std::path::Path;
use std::time::Instant;

use image::{GrayImage, Luma, Rgb, RgbImage};
use ndarray::{Array2, ArrayD};
use ndarray_npy::{read_npy, write_npy};
use serde::{Deserialize, Serialize};

use crate::data::SliceSource;
use crate::error::{Error, Result};
use crate::metrics::{binarize, evaluate_slice, MetricReport};
use crate::network::{load_checkpoint, AttentionUNet};
use crate::params::ParameterSet;
use crate::tensor::Tensor;

/// Network and weights restored from a checkpoint.
pub fn load_model(checkpoint: &Path) -> Result<(AttentionUNet, ParameterSet)> {
    let (config, params) = load_checkpoint(checkpoint)?;
    let net = AttentionUNet::new(config)?;
    net.check_params(&params)?;
    Ok((net, params))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `[H, W]` lesion probabilities.
    pub probabilities: Tensor,
    /// `[H, W]` binary mask, `p > threshold`.
    pub mask: Tensor,
    /// Wall-clock time of the forward pass and thresholding.
    pub seconds: f64,
}

/// Segments one `[H, W]` slice.
pub fn predict_slice(net: &AttentionUNet, params: &ParameterSet, image: &Tensor, threshold: f64) -> Result<Prediction> {
    let (h, w) = match *image.shape() {
        [h, w] => (h, w),
        ref s => return Err(Error::Shape(format!("expected an H×W slice, got {s:?}"))),
    };
    let started = Instant::now();
    let prob = net.predict(params, &image.clone().reshape(&[1, h, w])?)?.reshape(&[h, w])?;
    let mask = Tensor::from_vec(&[h, w], binarize(prob.data(), threshold))?;
    Ok(Prediction { probabilities: prob, mask, seconds: started.elapsed().as_secs_f64() })
}

/// Per-slice metrics of the network over every sample of `source`.
pub fn evaluate_source(
    net: &AttentionUNet,
    params: &ParameterSet,
    source: &dyn SliceSource,
    threshold: f64,
) -> Result<MetricReport> {
    let mut rows = Vec::with_capacity(source.len());
    for i in 0..source.len() {
        let s = source.load(i)?;
        let p = predict_slice(net, params, &s.image, threshold)?;
        rows.push((s.id(), evaluate_slice(p.probabilities.data(), s.mask.data(), threshold)?));
    }
    Ok(MetricReport::from_slices(rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub slices: usize,
    pub mean_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

impl TimingSummary {
    pub fn from_seconds(seconds: &[f64]) -> Self {
        let n = seconds.len().max(1) as f64;
        Self {
            slices: seconds.len(),
            mean_seconds: seconds.iter().sum::<f64>() / n,
            min_seconds: seconds.iter().cloned().fold(f64::INFINITY, f64::min),
            max_seconds: seconds.iter().cloned().fold(0.0, f64::max),
        }
    }
}

fn hw(t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [h, w] => Ok((h, w)),
        ref s => Err(Error::Shape(format!("expected an H×W map, got {s:?}"))),
    }
}

fn save_png(path: &Path, result: image::ImageResult<()>) -> Result<()> {
    result.map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// Probability map as an `f32` `.npy` of shape `(H, W)`.
pub fn write_probability_npy(path: &Path, prob: &Tensor) -> Result<()> {
    let (h, w) = hw(prob)?;
    let arr = Array2::from_shape_vec((h, w), prob.data().iter().map(|&v| v as f32).collect())
        .expect("H×W values");
    write_npy(path, &arr).map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// Reads an `f32` `.npy` holding an `(H, W)` map, or a prepared `(2, H, W)`
/// sample whose first plane is taken.
pub fn read_slice_npy(path: &Path) -> Result<Tensor> {
    let arr: ArrayD<f32> = read_npy(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let (h, w, plane) = match *arr.shape() {
        [h, w] => (h, w, h * w),
        [c, h, w] if c >= 1 => (h, w, h * w),
        ref s => {
            return Err(Error::Shape(format!("{}: expected (H, W) or (2, H, W), got {s:?}", path.display())))
        }
    };
    let data = arr.iter().take(plane).map(|&v| v as f64).collect();
    Tensor::from_vec(&[h, w], data)
}

/// Binary mask as an 8-bit PNG (0 or 255).
pub fn write_mask_png(path: &Path, mask: &Tensor) -> Result<()> {
    let (h, w) = hw(mask)?;
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([if mask.data()[y as usize * w + x as usize] > 0.0 { 255 } else { 0 }])
    });
    save_png(path, img.save(path))
}

/// Pixels of `mask` that are lesion and touch background (4-neighbourhood)
/// or the image border.
pub fn contour(mask: &Tensor) -> Result<Vec<bool>> {
    let (h, w) = hw(mask)?;
    let m = mask.data();
    let on = |i: isize, j: isize| {
        i >= 0 && j >= 0 && (i as usize) < h && (j as usize) < w && m[i as usize * w + j as usize] > 0.0
    };
    Ok((0..h * w)
        .map(|idx| {
            let (i, j) = ((idx / w) as isize, (idx % w) as isize);
            on(i, j) && !(on(i - 1, j) && on(i + 1, j) && on(i, j - 1) && on(i, j + 1))
        })
        .collect())
}

/// Greyscale slice with the mask contour drawn in red, as an RGB PNG.
pub fn write_overlay_png(path: &Path, image: &Tensor, mask: &Tensor) -> Result<()> {
    let (h, w) = hw(image)?;
    if hw(mask)? != (h, w) {
        return Err(Error::Shape(format!("image {:?} and mask {:?} differ", image.shape(), mask.shape())));
    }
    let edge = contour(mask)?;
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let idx = y as usize * w + x as usize;
        if edge[idx] {
            Rgb([255, 0, 0])
        } else {
            let g = (image.data()[idx].clamp(0.0, 1.0) * 255.0).round() as u8;
            Rgb([g, g, g])
        }
    });
    save_png(path, img.save(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{save_checkpoint, NetworkConfig};

    fn net() -> (AttentionUNet, ParameterSet) {
        let net = AttentionUNet::new(NetworkConfig {
            levels: 2,
            base_filters: 2,
            input_size: (8, 8),
            ..NetworkConfig::default()
        })
        .unwrap();
        let p = net.init_params();
        (net, p)
    }

    #[test]
    fn prediction_is_binary_and_deterministic() {
        let (net, p) = net();
        let image = Tensor::from_vec(&[8, 8], (0..64).map(|i| i as f64 / 63.0).collect()).unwrap();
        let a = predict_slice(&net, &p, &image, 0.5).unwrap();
        let b = predict_slice(&net, &p, &image, 0.5).unwrap();
        assert_eq!(a.mask, b.mask);
        assert!(a.mask.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(a.probabilities.shape(), &[8, 8]);
    }

    #[test]
    fn checkpoint_mismatch_is_rejected() {
        let (net, mut p) = net();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.safetensors");
        save_checkpoint(&path, net.config(), &p).unwrap();
        assert!(load_model(&path).is_ok());
        p.insert("extra", Tensor::zeros(&[1])).unwrap();
        assert!(save_checkpoint(&path, net.config(), &p).is_err());
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(load_model(&path).is_err());
    }

    #[test]
    fn contour_of_a_square() {
        let mut m = Tensor::zeros(&[5, 5]);
        for i in 1..4 {
            for j in 1..4 {
                m.data_mut()[i * 5 + j] = 1.0;
            }
        }
        let c = contour(&m).unwrap();
        assert_eq!(c.iter().filter(|&&b| b).count(), 8);
        assert!(!c[2 * 5 + 2]);
    }

    #[test]
    fn writes_three_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let img = Tensor::full(&[4, 6], 0.5);
        let mask = Tensor::from_vec(&[4, 6], (0..24).map(|i| (i % 2) as f64).collect()).unwrap();
        write_probability_npy(&dir.path().join("p.npy"), &img).unwrap();
        assert_eq!(read_slice_npy(&dir.path().join("p.npy")).unwrap(), img);
        write_mask_png(&dir.path().join("m.png"), &mask).unwrap();
        write_overlay_png(&dir.path().join("o.png"), &img, &mask).unwrap();
        let o = image::open(dir.path().join("o.png")).unwrap().to_rgb8();
        assert_eq!(o.dimensions(), (6, 4));
        assert_eq!(o.get_pixel(1, 0), &Rgb([255, 0, 0]));
        assert_eq!(o.get_pixel(0, 0), &Rgb([128, 128, 128]));
    }
}

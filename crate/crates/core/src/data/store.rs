//! Prepared slices on disk and in memory.
//!
//! Each sample is one `.npy` file holding a little-endian `f32` array of
//! shape `(2, H, W)`: channel 0 the normalized image, channel 1 the binary
//! mask.

use std::path::{Path, PathBuf};

use ndarray::{s, Array3};
use ndarray_npy::{read_npy, write_npy};

use crate::data::manifest::{DatasetManifest, SampleRef, Split};
use crate::data::resample::slice_dims;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SliceSample {
    /// `[H, W]` intensities in `[0, 1]`.
    pub image: Tensor,
    /// `[H, W]` with values in `{0, 1}`.
    pub mask: Tensor,
    pub source_id: String,
    pub volume_index: usize,
    pub slice_index: usize,
}

impl SliceSample {
    pub fn id(&self) -> String {
        format!("{}_v{:03}_s{:04}", self.source_id, self.volume_index, self.slice_index)
    }

    /// Checks the sample invariants: matching `H×W`, image in `[0, 1]`,
    /// binary mask.
    pub fn validate(&self) -> Result<()> {
        let dims = slice_dims(&self.image)?;
        if slice_dims(&self.mask)? != dims {
            return Err(Error::Shape(format!(
                "{}: image {:?} and mask {:?} differ",
                self.id(),
                self.image.shape(),
                self.mask.shape()
            )));
        }
        if let Some(v) = self.image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("{}: intensity {v} outside [0, 1]", self.id())));
        }
        if let Some(v) = self.mask.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput(format!("{}: mask value {v} is not binary", self.id())));
        }
        Ok(())
    }

    /// The image as a one-channel network input `[1, H, W]`.
    pub fn input(&self) -> Tensor {
        self.image.clone().reshape(&[1, self.image.shape()[0], self.image.shape()[1]]).expect("same size")
    }
}

pub fn write_sample(path: &Path, sample: &SliceSample) -> Result<()> {
    sample.validate()?;
    let (h, w) = slice_dims(&sample.image)?;
    let data: Vec<f32> = sample.image.data().iter().chain(sample.mask.data()).map(|&v| v as f32).collect();
    let arr = Array3::from_shape_vec((2, h, w), data).expect("two H×W planes");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_npy(path, &arr).map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// Reads the sample stored at `path` and tags it with `meta`.
pub fn read_sample(path: &Path, meta: &SampleRef) -> Result<SliceSample> {
    let arr: Array3<f32> = read_npy(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let (c, h, w) = arr.dim();
    if c != 2 {
        return Err(Error::Shape(format!("{}: expected shape (2, H, W), got {:?}", path.display(), arr.dim())));
    }
    let plane = |k: usize| {
        Tensor::from_vec(&[h, w], arr.slice(s![k, .., ..]).iter().map(|&v| v as f64).collect())
    };
    let sample = SliceSample {
        image: plane(0)?,
        mask: plane(1)?,
        source_id: meta.source_id.clone(),
        volume_index: meta.volume_index,
        slice_index: meta.slice_index,
    };
    sample.validate()?;
    Ok(sample)
}

/// Indexed access to samples, loaded on demand.
pub trait SliceSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn load(&self, index: usize) -> Result<SliceSample>;
}

impl SliceSource for [SliceSample] {
    fn len(&self) -> usize {
        <[SliceSample]>::len(self)
    }

    fn load(&self, index: usize) -> Result<SliceSample> {
        self.get(index)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("sample {index} out of range")))
    }
}

impl SliceSource for Vec<SliceSample> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn load(&self, index: usize) -> Result<SliceSample> {
        self.as_slice().load(index)
    }
}

/// One split of a prepared dataset, read from the slice store.
#[derive(Debug, Clone)]
pub struct StoredSplit {
    root: PathBuf,
    samples: Vec<SampleRef>,
}

impl StoredSplit {
    /// `root` is the directory holding the manifest.
    pub fn new(root: &Path, manifest: &DatasetManifest, split: Split) -> Self {
        Self { root: root.to_path_buf(), samples: manifest.split_of(split).into_iter().cloned().collect() }
    }

    pub fn refs(&self) -> &[SampleRef] {
        &self.samples
    }
}

impl SliceSource for StoredSplit {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn load(&self, index: usize) -> Result<SliceSample> {
        let meta = self
            .samples
            .get(index)
            .ok_or_else(|| Error::InvalidInput(format!("sample {index} out of range")))?;
        read_sample(&self.root.join(&meta.file), meta)
    }
}

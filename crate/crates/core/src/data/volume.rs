//! NIFTI image/mask volume pairs.
//!
//! Volumes are stored as `[slices, H, W]`. NIFTI arrays come out of the
//! reader as `[x, y, z]`, so slice `k` is `arr[.., .., k]` transposed: rows
//! run along `y`, columns along `x`.

use std::path::{Path, PathBuf};

use ndarray::{Array3, ArrayD, Axis, Ix3};
use nifti::writer::WriterOptions;
use nifti::{IntoNdArray, NiftiObject, ReaderOptions};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which slices of a volume count as annotated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceSelection {
    /// Every slice was reviewed, lesion or not.
    All,
    /// Only slices whose mask has at least one non-zero label.
    Annotated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRecord {
    pub source_id: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub num_slices: usize,
    /// `(height, width)` of every slice.
    pub original_size: (usize, usize),
    /// Indices of the slices that become samples.
    pub annotated_slices: Vec<usize>,
}

/// A loaded image/mask pair with raw intensities and labels.
#[derive(Debug, Clone)]
pub struct Volume {
    pub record: VolumeRecord,
    pub image: Array3<f32>,
    pub mask: Array3<f32>,
}

impl Volume {
    /// Image and mask of slice `k` as `[H, W]` tensors.
    pub fn slice(&self, k: usize) -> Result<(Tensor, Tensor)> {
        if k >= self.record.num_slices {
            return Err(Error::InvalidInput(format!(
                "slice {k} out of range for {} slices",
                self.record.num_slices
            )));
        }
        let (h, w) = self.record.original_size;
        let take = |a: &Array3<f32>| {
            let data = a.index_axis(Axis(0), k).iter().map(|&v| v as f64).collect();
            Tensor::from_vec(&[h, w], data)
        };
        Ok((take(&self.image)?, take(&self.mask)?))
    }
}

fn read_stack(path: &Path) -> Result<Array3<f32>> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    let nifti_err = |e: nifti::NiftiError| Error::Nifti { path: path.into(), message: e.to_string() };
    let arr: ArrayD<f32> = ReaderOptions::new()
        .read_file(path)
        .map_err(nifti_err)?
        .into_volume()
        .into_ndarray::<f32>()
        .map_err(nifti_err)?;
    to_stack(arr).map_err(|m| Error::Nifti { path: path.into(), message: m })
}

/// `[x, y, z]` (or `[x, y]`, or `[x, y, z, 1]`) to `[z, y, x]`.
fn to_stack(arr: ArrayD<f32>) -> std::result::Result<Array3<f32>, String> {
    let shape = arr.shape().to_vec();
    let arr = match shape.len() {
        2 => arr.insert_axis(Axis(2)),
        3 => arr,
        4 if shape[3] == 1 => arr.index_axis_move(Axis(3), 0),
        _ => return Err(format!("expected a stack of 2-D slices, got dimensions {shape:?}")),
    };
    let arr = arr.into_dimensionality::<Ix3>().map_err(|e| e.to_string())?;
    Ok(arr.permuted_axes([2, 1, 0]).as_standard_layout().into_owned())
}

/// Loads an image volume and its annotation volume.
pub fn load_nifti_volume(
    source_id: &str,
    image_path: &Path,
    mask_path: &Path,
    selection: SliceSelection,
) -> Result<Volume> {
    let image = read_stack(image_path)?;
    let mask = read_stack(mask_path)?;
    if image.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "{} has slices×H×W {:?} but {} has {:?}",
            image_path.display(),
            image.shape(),
            mask_path.display(),
            mask.shape()
        )));
    }
    let (n, h, w) = image.dim();
    let annotated_slices = match selection {
        SliceSelection::All => (0..n).collect(),
        SliceSelection::Annotated => (0..n)
            .filter(|&k| mask.index_axis(Axis(0), k).iter().any(|&v| v != 0.0))
            .collect(),
    };
    Ok(Volume {
        record: VolumeRecord {
            source_id: source_id.to_string(),
            image_path: image_path.to_path_buf(),
            mask_path: mask_path.to_path_buf(),
            num_slices: n,
            original_size: (h, w),
            annotated_slices,
        },
        image,
        mask,
    })
}

/// Writes a `[slices, H, W]` stack as a NIFTI volume (`.nii` or `.nii.gz`).
pub fn write_nifti_volume(path: &Path, stack: &Array3<f32>) -> Result<()> {
    let xyz = stack.view().permuted_axes([2, 1, 0]);
    WriterOptions::new(path)
        .write_nifti(&xyz)
        .map_err(|e| Error::Nifti { path: path.into(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(n: usize, h: usize, w: usize) -> Array3<f32> {
        Array3::from_shape_fn((n, h, w), |(k, i, j)| (k * 100 + i * 10 + j) as f32)
    }

    #[test]
    fn round_trip_keeps_orientation() {
        let dir = tempfile::tempdir().unwrap();
        let (img, msk) = (dir.path().join("img.nii"), dir.path().join("msk.nii.gz"));
        let s = stack(3, 4, 5);
        write_nifti_volume(&img, &s).unwrap();
        let mut m = Array3::zeros((3, 4, 5));
        m[[1, 2, 3]] = 2.0;
        write_nifti_volume(&msk, &m).unwrap();

        let v = load_nifti_volume("d", &img, &msk, SliceSelection::All).unwrap();
        assert_eq!(v.record.num_slices, 3);
        assert_eq!(v.record.original_size, (4, 5));
        assert_eq!(v.image, s);
        let (i, _) = v.slice(2).unwrap();
        assert_eq!(i.data()[5 + 3], 213.0);

        let v = load_nifti_volume("d", &img, &msk, SliceSelection::Annotated).unwrap();
        assert_eq!(v.record.annotated_slices, vec![1]);
    }

    #[test]
    fn mismatched_slice_counts_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (img, msk) = (dir.path().join("img.nii"), dir.path().join("msk.nii"));
        write_nifti_volume(&img, &stack(10, 4, 4)).unwrap();
        write_nifti_volume(&msk, &stack(9, 4, 4)).unwrap();
        let err = load_nifti_volume("d", &img, &msk, SliceSelection::All).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load_nifti_volume("d", Path::new("/nope/a.nii"), Path::new("/nope/b.nii"), SliceSelection::All)
            .unwrap_err();
        assert!(err.to_string().contains("/nope/a.nii"));
    }

    #[test]
    fn layouts() {
        assert_eq!(to_stack(ArrayD::zeros(vec![4, 3])).unwrap().dim(), (1, 3, 4));
        assert_eq!(to_stack(ArrayD::zeros(vec![4, 3, 2, 1])).unwrap().dim(), (2, 3, 4));
        assert!(to_stack(ArrayD::zeros(vec![4, 3, 2, 2])).is_err());
        assert!(to_stack(ArrayD::zeros(vec![4])).is_err());
    }
}

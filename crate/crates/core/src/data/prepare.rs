//! load → resample → normalize → merge labels → build → split.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::manifest::{build_dataset, split_dataset, DatasetManifest, Split};
use crate::data::preprocess::{merge_labels, normalize_intensity};
use crate::data::resample::{interpolator_registry, resample_slice};
use crate::data::store::{write_sample, SliceSample};
use crate::data::volume::{load_nifti_volume, SliceSelection};
use crate::error::{Error, Result};

/// Preparation settings (`data.*` keys).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Side of the prepared square slices.
    pub size: usize,
    pub seed: u64,
    pub image_kernel: String,
    pub mask_kernel: String,
    /// Sources that keep only slices with a non-zero mask.
    pub annotated_only: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            size: 512,
            seed: 0,
            image_kernel: "bilinear".into(),
            mask_kernel: "nearest".into(),
            annotated_only: vec!["dataset2".into()],
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.size < 2 {
            problems.push(format!("data.size must be >= 2, got {}", self.size));
        }
        let registry = interpolator_registry();
        for (key, name) in [("data.image_kernel", &self.image_kernel), ("data.mask_kernel", &self.mask_kernel)] {
            if let Err(e) = registry.get(name) {
                problems.push(format!("{key}: {e}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn selection_for(&self, source_id: &str) -> SliceSelection {
        if self.annotated_only.iter().any(|s| s == source_id) {
            SliceSelection::Annotated
        } else {
            SliceSelection::All
        }
    }
}

/// One image/mask volume pair of a named source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolumeSource {
    pub source_id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub total: usize,
    pub train: usize,
    pub test: usize,
    pub by_source: Vec<(String, usize)>,
}

impl std::fmt::Display for PrepareSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (source, n) in &self.by_source {
            writeln!(f, "{source}: {n} samples")?;
        }
        write!(f, "{} samples ({} train / {} test)", self.total, self.train, self.test)
    }
}

/// Turns one raw image/mask slice pair into a prepared sample.
pub fn prepare_slice(
    image: &crate::Tensor,
    mask: &crate::Tensor,
    config: &DataConfig,
) -> Result<(crate::Tensor, crate::Tensor)> {
    let registry = interpolator_registry();
    let target = (config.size, config.size);
    let image = resample_slice(image, target, registry.get(&config.image_kernel)?.as_ref())?;
    let mask = resample_slice(mask, target, registry.get(&config.mask_kernel)?.as_ref())?;
    Ok((normalize_intensity(&image)?, merge_labels(&mask)?))
}

/// Runs the whole preparation, writing `manifest.json` and `slices/` under
/// `out_dir`.
pub fn prepare_dataset(sources: &[VolumeSource], config: &DataConfig, out_dir: &Path) -> Result<(DatasetManifest, PrepareSummary)> {
    config.validate()?;
    let mut records = Vec::with_capacity(sources.len());
    let mut volume_counts: Vec<(&str, usize)> = Vec::new();
    for src in sources {
        let volume = load_nifti_volume(&src.source_id, &src.image, &src.mask, config.selection_for(&src.source_id))?;
        let volume_index = match volume_counts.iter_mut().find(|(id, _)| *id == src.source_id) {
            Some((_, n)) => {
                *n += 1;
                *n - 1
            }
            None => {
                volume_counts.push((&src.source_id, 1));
                0
            }
        };
        log::info!(
            "{}: {} slices of {:?}, {} selected",
            src.image.display(),
            volume.record.num_slices,
            volume.record.original_size,
            volume.record.annotated_slices.len()
        );
        for &k in &volume.record.annotated_slices {
            let (image, mask) = volume.slice(k)?;
            let context = |e: Error| Error::InvalidInput(format!("{} slice {k}: {e}", src.image.display()));
            let (image, mask) = prepare_slice(&image, &mask, config).map_err(context)?;
            let sample = SliceSample {
                image,
                mask,
                source_id: src.source_id.clone(),
                volume_index,
                slice_index: k,
            };
            write_sample(&out_dir.join("slices").join(format!("{}.npy", sample.id())), &sample)?;
        }
        records.push(volume.record);
    }
    let manifest = split_dataset(&build_dataset(&records)?, config.seed)?;
    manifest.save(&out_dir.join("manifest.json"))?;
    let summary = PrepareSummary {
        total: manifest.len(),
        train: manifest.split_of(Split::Train).len(),
        test: manifest.split_of(Split::Test).len(),
        by_source: manifest.counts_by_source(),
    };
    Ok((manifest, summary))
}

//! Dataset preparation: NIFTI volumes in, a split manifest and a directory
//! of prepared `.npy` slices out.

pub mod manifest;
pub mod prepare;
pub mod preprocess;
pub mod resample;
pub mod store;
pub mod synthetic;
pub mod volume;

pub use manifest::{build_dataset, split_dataset, train_count, DatasetManifest, SampleRef, Split};
pub use prepare::{prepare_dataset, prepare_slice, DataConfig, PrepareSummary, VolumeSource};
pub use preprocess::{merge_labels, normalize_intensity};
pub use resample::{interpolator_registry, resample_slice, Bilinear, Interpolator, Nearest};
pub use store::{read_sample, write_sample, SliceSample, SliceSource, StoredSplit};
pub use synthetic::{synthetic_blobs, synthetic_volume};
pub use volume::{load_nifti_volume, write_nifti_volume, SliceSelection, Volume, VolumeRecord};

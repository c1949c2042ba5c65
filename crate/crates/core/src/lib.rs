//! Attention U-Net for CT lesion segmentation.
//!
//! * [`data`]: NIFTI ingestion, resampling, normalization, label merging and
//!   the split manifest.
//! * [`network`]: the encoder/decoder with res_dil blocks, scSE attention and
//!   deep supervision, built on the small autodiff engine in [`nn`].
//! * [`losses`] and [`metrics`]: overlap losses and thresholded evaluation.
//! * [`config`]: the flat `key = value` experiment file.
//! * [`training`]: Adam training with plateau LR decay and early stopping,
//!   the four-row ablation and inference.

pub mod config;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod params;
pub mod registry;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use params::ParameterSet;
pub use tensor::Tensor;

//! The attention U-Net: encoder/decoder with strided-convolution
//! downsampling, res_dil blocks, scSE attention, deep supervision, plus the
//! receptive-field calculator and checkpoint container.

pub mod attention;
pub mod blocks;
pub mod checkpoint;
pub mod config;
pub mod model;
pub mod receptive_field;

pub use attention::{channel_attention, scse_fuse, spatial_attention};
pub use blocks::{conv_block, res_dil_block};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::NetworkConfig;
pub use model::{deep_supervision_aggregate, AttentionUNet, NetworkOutput};
pub use receptive_field::{compute_receptive_field, receptive_field_table, LayerField};

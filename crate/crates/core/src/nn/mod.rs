//! Minimal tensor autodiff used by the segmentation network.

pub mod graph;
pub mod kernels;

pub use graph::{Graph, Var};

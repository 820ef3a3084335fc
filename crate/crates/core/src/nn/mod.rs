//! Minimal dense neural-network kernel: tensors, layers, attention,
//! normalization, reverse-mode gradients and Adam.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod layers;
pub mod params;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{BatchStats, Graph, NodeId};
pub use layers::{
    batch_norm_forward, dense_forward, dropout, layer_norm, mse_loss, multi_head_attention, relu,
    softmax, BatchNorm,
};
pub use params::{Param, ParamStore};
pub use tensor::Tensor;

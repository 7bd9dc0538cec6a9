//! A small 64-bit neural-network engine: valid-padding stride-1 2-D
//! convolutions, dense layers, flatten, ReLU/linear activations, mean
//! absolute error and the AdamW optimizer.
//!
//! Tensors are channels-last (`[batch, height, width, channels]`).

mod adamw;
mod gemm;
pub mod gradcheck;
mod loss;
mod network;
mod tensor;

pub use adamw::{AdamW, AdamWConfig};
pub use loss::mae_loss;
pub use network::{
    param_count, Activation, ForwardCache, LayerShape, LayerSpec, Network, NetworkSpec,
};
pub use tensor::Tensor;

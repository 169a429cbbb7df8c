//! A small deterministic neural-network stack: 1-D convolutions over time,
//! pooling, dense layers, the usual activations, dropout and Gaussian noise,
//! with hand-written backward passes, Adam and a binary checkpoint format.
//!
//! Every example is a `frames x channels` tensor. Batches are handled by
//! [`batch_gradients`], which splits work into fixed chunks so the summed
//! gradient is identical for any thread count.

mod adam;
mod checkpoint;
mod layer;
mod loss;
mod network;
mod tensor;
mod train;

use thiserror::Error;

pub use adam::AdamState;
pub use checkpoint::{decode_network, encode_network, CheckpointMeta, NETWORK_MAGIC};
pub use layer::LayerSpec;
pub use loss::{mse, softmax, softmax_cross_entropy, summed_cross_entropy, summed_cross_entropy_grad, PROB_CLAMP};
pub use network::{ForwardCache, Gradients, Network};
pub use tensor::Tensor;
pub use train::{batch_gradients, BatchResult};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cache does not belong to the current parameters")]
    StaleCache,
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Train mode enables dropout and Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

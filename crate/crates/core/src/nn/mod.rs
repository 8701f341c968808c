//! Small tensor/layer library with hand-written gradients and the Q-network.

mod gemm;
pub mod io;
pub mod layers;
pub mod net;
pub mod optim;
pub mod tensor;

use thiserror::Error;

pub use layers::{Activation, Conv2d, Linear};
pub use net::{ArcaneNet, ConvSpec, ForwardCache, Gradients, NetConfig, NetInput, Variant};
pub use optim::{huber_loss, Optimizer, OptimizerKind};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{what}: expected {expected:?}, found {found:?}")]
    ShapeMismatch { what: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("model file is {found} but {expected} was requested")]
    VariantMismatch { expected: Variant, found: Variant },
    #[error("model file checksum mismatch (truncated or corrupted)")]
    Checksum,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u16),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

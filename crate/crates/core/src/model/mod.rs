//! The EEGNet variant: config-derived shapes, weights, the `EDAW` container,
//! forward execution, and parameter/MAC accounting.
//!
//! Layer stack for an input of `channels x samples`:
//!
//! | layer                | kernel                     | output            |
//! |----------------------|----------------------------|-------------------|
//! | temporal_conv        | F1 x (1, fs/2), same       | F1 x Ch x T       |
//! | bn1                  |                            |                   |
//! | spatial_conv         | F1·D x (Ch, 1), groups F1  | F1·D x 1 x T      |
//! | bn2, ELU, pool1      | mean over 4                | F1·D x 1 x T/4    |
//! | separable_depthwise  | F1·D x (1, fs/8), same     | F1·D x 1 x T/4    |
//! | separable_pointwise  | F2 x (1, 1)                | F2 x 1 x T/4      |
//! | bn3, ELU, pool2      | mean over 4                | F2 x 1 x T/16     |
//! | classifier + softmax | dense                      | classes           |
//!
//! Convolutions carry no bias; dropout is identity at inference.

mod config;
mod container;
mod footprint;
mod forward;
mod weights;

pub use config::{ConfigId, ModelConfig};
pub use container::{
    decode_weights, encode_weights, inspect_container, load_weights, load_weights_for, save_weights, ContainerMeta,
    ContainerSummary, LayerShape, PaddingConvention, CONTAINER_MAGIC, CONTAINER_VERSION,
};
pub use footprint::{footprint, FootprintReport, LayerFootprint, MAC_CONVENTION};
pub use forward::{argmax, extract_features, forward, forward_input, forward_trace, ForwardOutput, LayerTrace};
pub use weights::{DenseLayer, DropoutRates, ModelWeights};

use thiserror::Error;

use crate::archive::ArchiveError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input shape mismatch: expected {expected}, found {found}")]
    InputShape { expected: String, found: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite activation in layer {layer} at flat index {index}")]
    NonFinite { layer: String, index: usize },
    #[error("tensor {tensor}: expected shape {expected:?}, found {found:?}")]
    TensorShape {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor {0} holds non-finite values")]
    NonFiniteWeights(String),
    #[error("container is missing tensor {0}")]
    MissingTensor(String),
    #[error("container config does not match request: container has {container}, requested {requested}")]
    ConfigMismatch { container: String, requested: String },
    #[error(transparent)]
    Archive(#[from] ArchiveError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

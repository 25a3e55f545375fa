//! `EDAW` weight container: the archive framing from [`crate::archive`] with
//! magic `EDAW`, version 1, and a [`ContainerMeta`] header.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DropoutRates, ModelConfig, ModelError, ModelWeights, Result};
use crate::archive::{self, TensorEntry};

pub const CONTAINER_MAGIC: &[u8; 4] = b"EDAW";
pub const CONTAINER_VERSION: u32 = 1;

/// How each convolution pads its input; fixed for this network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddingConvention {
    pub temporal_conv: String,
    pub spatial_conv: String,
    pub separable_depthwise: String,
    pub separable_pointwise: String,
    /// Split rule used by every `same` layer.
    pub same_split: String,
}

impl Default for PaddingConvention {
    fn default() -> Self {
        Self {
            temporal_conv: "same".into(),
            spatial_conv: "valid".into(),
            separable_depthwise: "same".into(),
            separable_pointwise: "valid".into(),
            same_split: "before=floor((k-1)/2),after=ceil((k-1)/2)".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerMeta {
    pub architecture: String,
    pub config: ModelConfig,
    pub batchnorm_epsilon: f32,
    pub elu_alpha: f32,
    pub dropout: DropoutRates,
    pub conv_bias: bool,
    pub padding: PaddingConvention,
}

pub const ARCHITECTURE: &str = "eegnet-variant-dense-head";

pub fn save_weights(weights: &ModelWeights, config: &ModelConfig, path: &Path) -> Result<()> {
    let bytes = encode_weights(weights, config)?;
    std::fs::write(path, bytes).map_err(|source| {
        ModelError::Archive(archive::ArchiveError::Io {
            path: path.display().to_string(),
            source,
        })
    })
}

pub fn encode_weights(weights: &ModelWeights, config: &ModelConfig) -> Result<Vec<u8>> {
    weights.validate(config)?;
    let meta = ContainerMeta {
        architecture: ARCHITECTURE.into(),
        config: config.clone(),
        batchnorm_epsilon: weights.bn1.epsilon,
        elu_alpha: weights.elu_alpha,
        dropout: weights.dropout,
        conv_bias: false,
        padding: PaddingConvention::default(),
    };
    Ok(archive::encode(
        CONTAINER_MAGIC,
        CONTAINER_VERSION,
        &meta,
        &weights.to_named_tensors(),
    )?)
}

pub fn decode_weights(bytes: &[u8]) -> Result<(ModelWeights, ModelConfig)> {
    let ar = archive::decode::<ContainerMeta>(bytes, CONTAINER_MAGIC, CONTAINER_VERSION)?;
    let meta = ar.meta;
    if meta.architecture != ARCHITECTURE {
        return Err(ModelError::InvalidConfig(format!(
            "container architecture {:?}, expected {ARCHITECTURE:?}",
            meta.architecture
        )));
    }
    if meta.conv_bias || meta.padding != PaddingConvention::default() {
        return Err(ModelError::InvalidConfig(
            "container uses a conv bias or padding convention this engine does not implement".into(),
        ));
    }
    meta.config.validate()?;
    let weights = ModelWeights::from_named_tensors(
        &meta.config,
        &ar.tensors,
        meta.batchnorm_epsilon,
        meta.dropout,
        meta.elu_alpha,
    )?;
    Ok((weights, meta.config))
}

pub fn load_weights(path: &Path) -> Result<(ModelWeights, ModelConfig)> {
    let bytes = std::fs::read(path).map_err(|source| {
        ModelError::Archive(archive::ArchiveError::Io {
            path: path.display().to_string(),
            source,
        })
    })?;
    decode_weights(&bytes)
}

/// Load and require the container's config to equal `requested`.
pub fn load_weights_for(path: &Path, requested: &ModelConfig) -> Result<ModelWeights> {
    let (weights, config) = load_weights(path)?;
    if &config != requested {
        return Err(ModelError::ConfigMismatch {
            container: config.describe(),
            requested: requested.describe(),
        });
    }
    Ok(weights)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerShape {
    pub name: String,
    pub shape: Vec<usize>,
    pub params: usize,
    /// Absolute byte range of the tensor in the file.
    pub byte_start: usize,
    pub byte_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainerSummary {
    pub config: ModelConfig,
    pub config_id: Option<String>,
    pub feature_dim: usize,
    pub version: u32,
    pub crc32: String,
    pub file_bytes: usize,
    pub tensors: Vec<LayerShape>,
    pub total_params: usize,
    pub dense_params: usize,
}

pub fn inspect_container(path: &Path) -> Result<ContainerSummary> {
    let bytes = std::fs::read(path).map_err(|source| {
        ModelError::Archive(archive::ArchiveError::Io {
            path: path.display().to_string(),
            source,
        })
    })?;
    let (_, config) = decode_weights(&bytes)?;
    let ar = archive::decode::<ContainerMeta>(&bytes, CONTAINER_MAGIC, CONTAINER_VERSION)?;
    let table: Vec<TensorEntry> = archive::tensor_table(&bytes)?;
    let tensors: Vec<LayerShape> = table
        .iter()
        .map(|e| {
            let r = ar.info.byte_range(e);
            LayerShape {
                name: e.name.clone(),
                shape: e.shape.clone(),
                params: e.length,
                byte_start: r.start,
                byte_end: r.end,
            }
        })
        .collect();
    let dense_params = tensors
        .iter()
        .filter(|t| !ModelWeights::is_backbone_tensor(&t.name))
        .map(|t| t.params)
        .sum();
    Ok(ContainerSummary {
        config_id: config.id().map(|id| id.as_str().to_string()),
        feature_dim: config.feature_dim(),
        config,
        version: ar.info.version,
        crc32: format!("{:08x}", ar.info.crc32),
        file_bytes: bytes.len(),
        total_params: tensors.iter().map(|t| t.params).sum(),
        dense_params,
        tensors,
    })
}

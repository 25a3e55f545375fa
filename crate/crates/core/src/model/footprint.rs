use serde::{Deserialize, Serialize};

use super::{ConfigId, ModelConfig};

pub const MAC_CONVENTION: &str = "one MAC = one multiply + one add of a conv or dense layer; \
same-padded taps are counted over the full kernel; batch norm, ELU, pooling and softmax are \
tallied as other_ops (elements processed) and excluded from the MAC total; bytes = 4 per f32";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFootprint {
    pub name: String,
    /// Trainable parameters.
    pub params: usize,
    /// Non-trainable stored values (batch-norm running statistics).
    pub buffers: usize,
    pub macs: u64,
    pub other_ops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintReport {
    pub config: ModelConfig,
    pub layers: Vec<LayerFootprint>,
    pub total_params: usize,
    pub total_buffers: usize,
    /// Trainable parameters at 4 bytes each.
    pub param_bytes: usize,
    /// Every stored float (parameters plus running statistics) at 4 bytes each.
    pub stored_bytes: usize,
    pub total_macs: u64,
    pub total_other_ops: u64,
    pub convention: String,
    /// Published on-device network size for this config, in KByte. Reference only.
    pub reference_kbytes: Option<f64>,
}

impl FootprintReport {
    pub fn layer(&self, name: &str) -> Option<&LayerFootprint> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn stored_kib(&self) -> f64 {
        self.stored_bytes as f64 / 1024.0
    }
}

fn reference_kbytes(id: ConfigId) -> f64 {
    match id {
        ConfigId::Baseline => 24.9,
        ConfigId::COne => 15.6,
        ConfigId::CTwo => 8.5,
    }
}

pub fn footprint(config: &ModelConfig) -> FootprintReport {
    let ch = config.channels as u64;
    let t = config.samples as u64;
    let t1 = config.pooled1_len() as u64;
    let f1 = config.temporal_filters as u64;
    let sf = config.spatial_filters() as u64;
    let f2 = config.pointwise_filters as u64;
    let kt = config.temporal_kernel as u64;
    let ks = config.separable_kernel as u64;
    let fd = config.feature_dim() as u64;
    let k = config.num_classes as u64;

    let layer = |name: &str, params: u64, buffers: u64, macs: u64, other: u64| LayerFootprint {
        name: name.into(),
        params: params as usize,
        buffers: buffers as usize,
        macs,
        other_ops: other,
    };
    let layers = vec![
        layer("temporal_conv", f1 * kt, 0, f1 * ch * t * kt, 0),
        layer("bn1", 2 * f1, 2 * f1, 0, f1 * ch * t),
        layer("spatial_conv", sf * ch, 0, sf * t * ch, 0),
        layer("bn2", 2 * sf, 2 * sf, 0, sf * t),
        layer("elu1", 0, 0, 0, sf * t),
        layer("pool1", 0, 0, 0, sf * t),
        layer("separable_depthwise", sf * ks, 0, sf * t1 * ks, 0),
        layer("separable_pointwise", f2 * sf, 0, f2 * t1 * sf, 0),
        layer("bn3", 2 * f2, 2 * f2, 0, f2 * t1),
        layer("elu2", 0, 0, 0, f2 * t1),
        layer("pool2", 0, 0, 0, f2 * t1),
        layer("classifier", k * fd + k, 0, k * fd, 0),
        layer("softmax", 0, 0, 0, k),
    ];
    let total_params = layers.iter().map(|l| l.params).sum::<usize>();
    let total_buffers = layers.iter().map(|l| l.buffers).sum::<usize>();
    FootprintReport {
        config: config.clone(),
        total_macs: layers.iter().map(|l| l.macs).sum(),
        total_other_ops: layers.iter().map(|l| l.other_ops).sum(),
        layers,
        total_params,
        total_buffers,
        param_bytes: total_params * 4,
        stored_bytes: (total_params + total_buffers) * 4,
        convention: MAC_CONVENTION.into(),
        reference_kbytes: config.id().map(reference_kbytes),
    }
}

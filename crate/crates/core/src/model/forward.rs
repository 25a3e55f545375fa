use super::{ModelConfig, ModelError, ModelWeights, Result};
use crate::dataset::EegEpoch;
use crate::tensor::{self, avg_pool_w, batchnorm_infer, conv2d, elu, Padding, Tensor3};

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Flattened output of the second pooling stage, length `feature_dim`.
    pub features: Vec<f32>,
    pub logits: Vec<f32>,
    pub probabilities: Vec<f32>,
}

impl ForwardOutput {
    /// Top-1 class; ties go to the lowest index.
    pub fn predicted(&self) -> usize {
        argmax(&self.probabilities)
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Activation snapshot of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub layer: &'static str,
    pub output: Tensor3,
}

pub fn forward(weights: &ModelWeights, config: &ModelConfig, epoch: &EegEpoch) -> Result<ForwardOutput> {
    if epoch.channels() != config.channels || epoch.samples() != config.samples {
        return Err(ModelError::InputShape {
            expected: format!("{} x {}", config.channels, config.samples),
            found: format!("{} x {}", epoch.channels(), epoch.samples()),
        });
    }
    forward_input(weights, config, epoch.data())
}

/// Forward pass on a raw `channels x samples` row-major matrix.
pub fn forward_input(weights: &ModelWeights, config: &ModelConfig, input: &[f32]) -> Result<ForwardOutput> {
    let features = backbone(weights, config, input, &mut |_, _| {})?;
    head(weights, features)
}

/// Forward pass that also returns every intermediate activation.
pub fn forward_trace(
    weights: &ModelWeights,
    config: &ModelConfig,
    input: &[f32],
) -> Result<(ForwardOutput, Vec<LayerTrace>)> {
    let mut trace = Vec::new();
    let features = backbone(weights, config, input, &mut |layer, t| {
        trace.push(LayerTrace {
            layer,
            output: t.clone(),
        })
    })?;
    Ok((head(weights, features)?, trace))
}

/// Backbone features for a raw input matrix.
pub fn extract_features(weights: &ModelWeights, config: &ModelConfig, input: &[f32]) -> Result<Vec<f32>> {
    backbone(weights, config, input, &mut |_, _| {})
}

fn check(layer: &'static str, t: Tensor3, observe: &mut dyn FnMut(&'static str, &Tensor3)) -> Result<Tensor3> {
    if let Some(index) = t.first_non_finite() {
        return Err(ModelError::NonFinite {
            layer: layer.into(),
            index,
        });
    }
    observe(layer, &t);
    Ok(t)
}

fn backbone(
    w: &ModelWeights,
    config: &ModelConfig,
    input: &[f32],
    observe: &mut dyn FnMut(&'static str, &Tensor3),
) -> Result<Vec<f32>> {
    let expected = config.channels * config.samples;
    if input.len() != expected {
        return Err(ModelError::InputShape {
            expected: format!("{} x {} = {expected} values", config.channels, config.samples),
            found: format!("{} values", input.len()),
        });
    }
    if let Some(index) = input.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite {
            layer: "input".into(),
            index,
        });
    }
    let alpha = w.elu_alpha;
    let x = Tensor3::new(1, config.channels, config.samples, input.to_vec())?;

    let x = check("temporal_conv", conv2d(&x, &w.temporal, Padding::Same)?, observe)?;
    let x = check("bn1", batchnorm_infer(&x, &w.bn1)?, observe)?;
    let x = check("spatial_conv", conv2d(&x, &w.spatial, Padding::Valid)?, observe)?;
    let x = check("bn2", batchnorm_infer(&x, &w.bn2)?, observe)?;
    let x = check("elu1", elu(&x, alpha), observe)?;
    let x = check("pool1", avg_pool_w(&x, config.pool1)?, observe)?;
    let x = check(
        "separable_depthwise",
        conv2d(&x, &w.separable_depthwise, Padding::Same)?,
        observe,
    )?;
    let x = check(
        "separable_pointwise",
        conv2d(&x, &w.separable_pointwise, Padding::Valid)?,
        observe,
    )?;
    let x = check("bn3", batchnorm_infer(&x, &w.bn3)?, observe)?;
    let x = check("elu2", elu(&x, alpha), observe)?;
    let x = check("pool2", avg_pool_w(&x, config.pool2)?, observe)?;
    Ok(x.into_data())
}

fn head(w: &ModelWeights, features: Vec<f32>) -> Result<ForwardOutput> {
    let logits = w.classifier.logits(&features)?;
    if let Some(index) = logits.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite {
            layer: "classifier".into(),
            index,
        });
    }
    let probabilities = tensor::softmax(&logits)?;
    Ok(ForwardOutput {
        features,
        logits,
        probabilities,
    })
}

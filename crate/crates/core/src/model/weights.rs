use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, Result};
use crate::archive::NamedTensor;
use crate::tensor::{BatchNormParams, ConvKernelBank};

/// Dropout rates recorded with the weights. Never applied by this engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutRates {
    pub block1: f32,
    pub block2: f32,
}

impl Default for DropoutRates {
    fn default() -> Self {
        Self {
            block1: 0.25,
            block2: 0.25,
        }
    }
}

/// Final fully connected layer, weight stored row-major `classes x features`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub classes: usize,
    pub features: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl DenseLayer {
    pub fn zeros(classes: usize, features: usize) -> Self {
        Self {
            classes,
            features,
            weight: vec![0.0; classes * features],
            bias: vec![0.0; classes],
        }
    }

    pub fn logits(&self, features: &[f32]) -> Result<Vec<f32>> {
        Ok(crate::tensor::dense(features, &self.weight, &self.bias)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub temporal: ConvKernelBank,
    pub bn1: BatchNormParams,
    pub spatial: ConvKernelBank,
    pub bn2: BatchNormParams,
    pub separable_depthwise: ConvKernelBank,
    pub separable_pointwise: ConvKernelBank,
    pub bn3: BatchNormParams,
    pub classifier: DenseLayer,
    pub dropout: DropoutRates,
    pub elu_alpha: f32,
}

impl ModelWeights {
    /// All convolution and dense weights zero, batch norms at identity.
    pub fn zeros(config: &ModelConfig) -> Self {
        Self::from_fn(
            config,
            |len, _| vec![0.0; len],
            |name, maps| BatchNormParams::identity(name, maps),
        )
    }

    /// Uniform fan-in scaled initialisation with mildly perturbed batch-norm
    /// statistics. Deterministic in `seed`.
    pub fn random(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bn_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        Self::from_fn(
            config,
            |len, fan_in| {
                let bound = (1.0 / fan_in as f32).sqrt();
                (0..len).map(|_| rng.random_range(-bound..bound)).collect()
            },
            |name, maps| BatchNormParams {
                name: name.into(),
                gamma: (0..maps).map(|_| bn_rng.random_range(0.5..1.5)).collect(),
                beta: (0..maps).map(|_| bn_rng.random_range(-0.2..0.2)).collect(),
                running_mean: (0..maps).map(|_| bn_rng.random_range(-0.1..0.1)).collect(),
                running_var: (0..maps).map(|_| bn_rng.random_range(0.5..2.0)).collect(),
                epsilon: BatchNormParams::DEFAULT_EPSILON,
            },
        )
    }

    fn from_fn(
        config: &ModelConfig,
        mut fill: impl FnMut(usize, usize) -> Vec<f32>,
        mut bn: impl FnMut(&str, usize) -> BatchNormParams,
    ) -> Self {
        let f1 = config.temporal_filters;
        let sf = config.spatial_filters();
        let f2 = config.pointwise_filters;
        let kt = config.temporal_kernel;
        let ks = config.separable_kernel;
        let fd = config.feature_dim();
        let classes = config.num_classes;

        let temporal = ConvKernelBank::new("temporal_conv", f1, 1, kt, 1, fill(f1 * kt, kt));
        let bn1 = bn("bn1", f1);
        let spatial = ConvKernelBank::new(
            "spatial_conv",
            sf,
            config.channels,
            1,
            f1,
            fill(sf * config.channels, config.channels),
        );
        let bn2 = bn("bn2", sf);
        let separable_depthwise = ConvKernelBank::new("separable_depthwise", sf, 1, ks, sf, fill(sf * ks, ks));
        let separable_pointwise = ConvKernelBank::new("separable_pointwise", f2, 1, 1, 1, fill(f2 * sf, sf));
        let bn3 = bn("bn3", f2);
        let classifier = DenseLayer {
            classes,
            features: fd,
            weight: fill(classes * fd, fd),
            bias: fill(classes, fd),
        };
        Self {
            temporal,
            bn1,
            spatial,
            bn2,
            separable_depthwise,
            separable_pointwise,
            bn3,
            classifier,
            dropout: DropoutRates::default(),
            elu_alpha: 1.0,
        }
    }

    /// Tensors in container order. The classifier comes last so the backbone
    /// occupies a contiguous prefix of the payload.
    pub fn to_named_tensors(&self) -> Vec<NamedTensor> {
        let conv = |name: &str, bank: &ConvKernelBank| {
            NamedTensor::new(format!("{name}.weight"), bank.shape().to_vec(), bank.weights.clone())
        };
        let bn = |name: &str, p: &BatchNormParams| {
            let n = p.len();
            vec![
                NamedTensor::new(format!("{name}.gamma"), vec![n], p.gamma.clone()),
                NamedTensor::new(format!("{name}.beta"), vec![n], p.beta.clone()),
                NamedTensor::new(format!("{name}.running_mean"), vec![n], p.running_mean.clone()),
                NamedTensor::new(format!("{name}.running_var"), vec![n], p.running_var.clone()),
            ]
        };
        let mut out = vec![conv("temporal_conv", &self.temporal)];
        out.extend(bn("bn1", &self.bn1));
        out.push(conv("spatial_conv", &self.spatial));
        out.extend(bn("bn2", &self.bn2));
        out.push(conv("separable_depthwise", &self.separable_depthwise));
        out.push(conv("separable_pointwise", &self.separable_pointwise));
        out.extend(bn("bn3", &self.bn3));
        out.push(NamedTensor::new(
            "classifier.weight",
            vec![self.classifier.classes, self.classifier.features],
            self.classifier.weight.clone(),
        ));
        out.push(NamedTensor::new(
            "classifier.bias",
            vec![self.classifier.classes],
            self.classifier.bias.clone(),
        ));
        out
    }

    /// Names of every tensor that belongs to the frozen backbone.
    pub fn is_backbone_tensor(name: &str) -> bool {
        !name.starts_with("classifier.")
    }

    /// Expected `(name, shape)` table for a config, in container order.
    pub fn expected_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        Self::zeros(config)
            .to_named_tensors()
            .into_iter()
            .map(|t| (t.name, t.shape))
            .collect()
    }

    /// Check every tensor against the config-derived shape and for finiteness.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        config.validate()?;
        let expected = Self::expected_shapes(config);
        let actual = self.to_named_tensors();
        for ((name, shape), t) in expected.iter().zip(&actual) {
            if &t.shape != shape || t.data.len() != t.element_count() {
                return Err(ModelError::TensorShape {
                    tensor: name.clone(),
                    expected: shape.clone(),
                    found: t.shape.clone(),
                });
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteWeights(name.clone()));
            }
        }
        let groups = [
            (&self.temporal, 1),
            (&self.spatial, config.temporal_filters),
            (&self.separable_depthwise, config.spatial_filters()),
            (&self.separable_pointwise, 1),
        ];
        for (bank, g) in groups {
            if bank.groups != g {
                return Err(ModelError::InvalidConfig(format!(
                    "{}: groups {} but config needs {g}",
                    bank.name, bank.groups
                )));
            }
        }
        for bn in [&self.bn1, &self.bn2, &self.bn3] {
            bn.validate()?;
        }
        if self.bn2.epsilon != self.bn1.epsilon || self.bn3.epsilon != self.bn1.epsilon {
            return Err(ModelError::InvalidConfig(
                "batch-norm layers must share one epsilon".into(),
            ));
        }
        Ok(())
    }

    /// Rebuild weights from a tensor list in any order.
    pub fn from_named_tensors(
        config: &ModelConfig,
        tensors: &[NamedTensor],
        epsilon: f32,
        dropout: DropoutRates,
        elu_alpha: f32,
    ) -> Result<Self> {
        let get = |name: &str| -> Result<Vec<f32>> {
            tensors
                .iter()
                .find(|t| t.name == name)
                .map(|t| t.data.clone())
                .ok_or_else(|| ModelError::MissingTensor(name.into()))
        };
        for (name, shape) in Self::expected_shapes(config) {
            let t = tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| ModelError::MissingTensor(name.clone()))?;
            if t.shape != shape {
                return Err(ModelError::TensorShape {
                    tensor: name,
                    expected: shape,
                    found: t.shape.clone(),
                });
            }
        }
        let bn = |name: &str| -> Result<BatchNormParams> {
            Ok(BatchNormParams {
                name: name.into(),
                gamma: get(&format!("{name}.gamma"))?,
                beta: get(&format!("{name}.beta"))?,
                running_mean: get(&format!("{name}.running_mean"))?,
                running_var: get(&format!("{name}.running_var"))?,
                epsilon,
            })
        };
        let mut w = Self::zeros(config);
        w.temporal.weights = get("temporal_conv.weight")?;
        w.bn1 = bn("bn1")?;
        w.spatial.weights = get("spatial_conv.weight")?;
        w.bn2 = bn("bn2")?;
        w.separable_depthwise.weights = get("separable_depthwise.weight")?;
        w.separable_pointwise.weights = get("separable_pointwise.weight")?;
        w.bn3 = bn("bn3")?;
        w.classifier.weight = get("classifier.weight")?;
        w.classifier.bias = get("classifier.bias")?;
        w.dropout = dropout;
        w.elu_alpha = elu_alpha;
        w.validate(config)?;
        Ok(w)
    }

    /// Bit patterns of every backbone tensor, for frozen-backbone checks.
    pub fn backbone_bits(&self) -> Vec<u32> {
        self.to_named_tensors()
            .into_iter()
            .filter(|t| Self::is_backbone_tensor(&t.name))
            .flat_map(|t| t.data.into_iter().map(f32::to_bits))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_weights_are_valid_and_seeded() {
        for id in super::super::ConfigId::ALL {
            let c = id.config();
            let a = ModelWeights::random(&c, 1);
            a.validate(&c).unwrap();
            assert_eq!(a, ModelWeights::random(&c, 1));
            assert_ne!(a, ModelWeights::random(&c, 2));
        }
    }

    #[test]
    fn classifier_is_last_in_table() {
        let c = super::super::ConfigId::CTwo.config();
        let names: Vec<String> = ModelWeights::expected_shapes(&c).into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), 18);
        assert_eq!(&names[16..], &["classifier.weight", "classifier.bias"]);
        assert!(names[..16].iter().all(|n| ModelWeights::is_backbone_tensor(n)));
    }

    #[test]
    fn validate_catches_bad_shapes() {
        let c = super::super::ConfigId::CTwo.config();
        let mut w = ModelWeights::zeros(&c);
        w.classifier.weight.pop();
        assert!(matches!(w.validate(&c), Err(ModelError::TensorShape { .. })));
        let mut w = ModelWeights::zeros(&c);
        w.bn2.gamma[0] = f32::NAN;
        assert!(matches!(w.validate(&c), Err(ModelError::NonFiniteWeights(_))));
    }
}

//! Streaming adaptation of the dense classifier on top of a frozen backbone.
//!
//! Each labeled sample runs, in order: backbone forward, classifier
//! probabilities, cross-entropy loss, closed-form gradient, EMA of the
//! gradient (`v <- beta*v + (1-beta)*g`), and the update `theta <- theta - lr*v`.
//! There is no bias correction on the EMA and no clipping; a step that would
//! produce non-finite parameters is rejected with an error and leaves the
//! state untouched.

mod engine;
mod events;

pub use engine::{ClassifierSnapshots, OnlineEngine};
pub use events::{read_event_log, write_event_log, AdaptEvent};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::EegEpoch;
use crate::model::{self, DenseLayer, ModelConfig, ModelError, ModelWeights};
use crate::tensor;

#[derive(Debug, Error)]
pub enum OnlineError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("class index {label} out of range for {classes} classes")]
    ClassOutOfRange { label: usize, classes: usize },
    #[error("{what}: expected length {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("update produced non-finite {0}; learning rate too large?")]
    NonFinite(&'static str),
    #[error("online training engine is not activated")]
    NotActivated,
    #[error("empty adaptation stream")]
    EmptyStream,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] tensor::TensorError),
}

pub type Result<T> = std::result::Result<T, OnlineError>;

/// Probability floor applied before taking the log in [`cross_entropy`].
pub const PROBABILITY_FLOOR: f32 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineHyperparams {
    pub learning_rate: f32,
    pub ema_coefficient: f32,
    pub epochs_per_sample: usize,
}

impl Default for OnlineHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            ema_coefficient: 0.9,
            epochs_per_sample: 1,
        }
    }
}

impl OnlineHyperparams {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted: it turns adaptation into a no-op, which the
        // harness uses as a control.
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(OnlineError::InvalidHyperparams(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.ema_coefficient) {
            return Err(OnlineError::InvalidHyperparams(format!(
                "EMA coefficient must be in [0, 1), got {}",
                self.ema_coefficient
            )));
        }
        if self.epochs_per_sample == 0 {
            return Err(OnlineError::InvalidHyperparams("epochs_per_sample must be >= 1".into()));
        }
        Ok(())
    }
}

/// `-ln p[label]`, with `p[label]` floored at [`PROBABILITY_FLOOR`].
pub fn cross_entropy(probabilities: &[f32], label: usize) -> Result<f32> {
    let p = probabilities.get(label).ok_or(OnlineError::ClassOutOfRange {
        label,
        classes: probabilities.len(),
    })?;
    Ok(-p.max(PROBABILITY_FLOOR).ln())
}

/// Gradient of cross-entropy∘softmax w.r.t. the dense layer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGradient {
    /// Row-major `classes x features`.
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl DenseGradient {
    pub fn norms(&self) -> (f32, f32) {
        let l2 = |v: &[f32]| v.iter().map(|x| x * x).sum::<f32>().sqrt();
        (l2(&self.weight), l2(&self.bias))
    }
}

/// `db[c] = p[c] - onehot(label)[c]`, `dW[c][f] = db[c] * features[f]`.
pub fn dense_gradient(features: &[f32], probabilities: &[f32], label: usize) -> Result<DenseGradient> {
    let classes = probabilities.len();
    if label >= classes {
        return Err(OnlineError::ClassOutOfRange { label, classes });
    }
    let bias: Vec<f32> = probabilities
        .iter()
        .enumerate()
        .map(|(c, &p)| if c == label { p - 1.0 } else { p })
        .collect();
    let mut weight = Vec::with_capacity(classes * features.len());
    for &d in &bias {
        weight.extend(features.iter().map(|&x| d * x));
    }
    Ok(DenseGradient { weight, bias })
}

/// Mutable part of the online trainer: dense parameters plus EMA buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierState {
    pub classes: usize,
    pub features: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub ema_weight: Vec<f32>,
    pub ema_bias: Vec<f32>,
    pub samples_seen: u64,
}

impl ClassifierState {
    /// Start from a trained dense layer with zeroed EMA buffers.
    pub fn from_dense(layer: &DenseLayer) -> Self {
        Self {
            classes: layer.classes,
            features: layer.features,
            weight: layer.weight.clone(),
            bias: layer.bias.clone(),
            ema_weight: vec![0.0; layer.weight.len()],
            ema_bias: vec![0.0; layer.bias.len()],
            samples_seen: 0,
        }
    }

    pub fn to_dense(&self) -> DenseLayer {
        DenseLayer {
            classes: self.classes,
            features: self.features,
            weight: self.weight.clone(),
            bias: self.bias.clone(),
        }
    }

    pub fn probabilities(&self, features: &[f32]) -> Result<Vec<f32>> {
        if features.len() != self.features {
            return Err(OnlineError::Shape {
                what: "features",
                expected: self.features,
                found: features.len(),
            });
        }
        let logits = tensor::dense(features, &self.weight, &self.bias)?;
        Ok(tensor::softmax(&logits)?)
    }

    /// `v <- beta*v + (1-beta)*g` for weight and bias buffers.
    pub fn ema_update(&mut self, grad: &DenseGradient, beta: f32) -> Result<()> {
        if grad.weight.len() != self.ema_weight.len() || grad.bias.len() != self.ema_bias.len() {
            return Err(OnlineError::Shape {
                what: "gradient",
                expected: self.ema_weight.len() + self.ema_bias.len(),
                found: grad.weight.len() + grad.bias.len(),
            });
        }
        let keep = 1.0 - beta;
        for (v, g) in self.ema_weight.iter_mut().zip(&grad.weight) {
            *v = beta * *v + keep * g;
        }
        for (v, g) in self.ema_bias.iter_mut().zip(&grad.bias) {
            *v = beta * *v + keep * g;
        }
        Ok(())
    }

    /// `theta <- theta - lr * v`. Rejected without side effects if any
    /// resulting parameter would be non-finite.
    pub fn apply_update(&mut self, learning_rate: f32) -> Result<()> {
        let new_w: Vec<f32> = self
            .weight
            .iter()
            .zip(&self.ema_weight)
            .map(|(w, v)| w - learning_rate * v)
            .collect();
        if new_w.iter().any(|v| !v.is_finite()) {
            return Err(OnlineError::NonFinite("classifier weight"));
        }
        let new_b: Vec<f32> = self
            .bias
            .iter()
            .zip(&self.ema_bias)
            .map(|(b, v)| b - learning_rate * v)
            .collect();
        if new_b.iter().any(|v| !v.is_finite()) {
            return Err(OnlineError::NonFinite("classifier bias"));
        }
        self.weight = new_w;
        self.bias = new_b;
        Ok(())
    }

    /// One adaptation step from precomputed backbone features.
    ///
    /// Runs `epochs_per_sample` passes of loss → gradient → EMA → update on
    /// this sample; the returned event describes the first pass (the
    /// pre-update prediction). `samples_seen` advances by exactly one.
    pub fn step_features(&mut self, features: &[f32], label: usize, hyper: &OnlineHyperparams) -> Result<AdaptEvent> {
        hyper.validate()?;
        if label >= self.classes {
            return Err(OnlineError::ClassOutOfRange {
                label,
                classes: self.classes,
            });
        }
        let mut first = None;
        let mut scratch = self.clone();
        for _ in 0..hyper.epochs_per_sample {
            let p = scratch.probabilities(features)?;
            let loss = cross_entropy(&p, label)?;
            let grad = dense_gradient(features, &p, label)?;
            if first.is_none() {
                let (gw, gb) = grad.norms();
                first = Some(AdaptEvent {
                    sample_index: self.samples_seen,
                    loss,
                    predicted: model::argmax(&p),
                    label,
                    grad_weight_norm: gw,
                    grad_bias_norm: gb,
                });
            }
            scratch.ema_update(&grad, hyper.ema_coefficient)?;
            scratch.apply_update(hyper.learning_rate)?;
        }
        if scratch
            .ema_weight
            .iter()
            .chain(&scratch.ema_bias)
            .any(|v| !v.is_finite())
        {
            return Err(OnlineError::NonFinite("EMA buffer"));
        }
        *self = scratch;
        self.samples_seen += 1;
        Ok(first.expect("epochs_per_sample >= 1"))
    }
}

/// One streaming update: frozen-backbone forward, then a classifier step.
/// The updated head is written back into `weights.classifier`; backbone
/// tensors are never touched.
pub fn adapt_step(
    weights: &mut ModelWeights,
    config: &ModelConfig,
    state: &mut ClassifierState,
    hyper: &OnlineHyperparams,
    epoch: &EegEpoch,
    label: usize,
) -> Result<AdaptEvent> {
    let out = model::forward(weights, config, epoch)?;
    let event = state.step_features(&out.features, label, hyper)?;
    weights.classifier = state.to_dense();
    Ok(event)
}

/// Result of folding [`adapt_step`] over a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub state: ClassifierState,
    pub events: Vec<AdaptEvent>,
}

/// A session aborted by its first failing step; carries the events logged so far.
#[derive(Debug)]
pub struct SessionError {
    pub events: Vec<AdaptEvent>,
    pub error: OnlineError,
}

impl std::fmt::Display for SessionError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "adaptation aborted after {} samples: {}",
            self.events.len(),
            self.error
        )
    }
}

impl std::error::Error for SessionError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Adapt a fresh classifier state (from `weights.classifier`) over `stream`
/// in order. On success `weights.classifier` holds the final head.
pub fn adapt_session<'a, I>(
    weights: &mut ModelWeights,
    config: &ModelConfig,
    hyper: &OnlineHyperparams,
    stream: I,
) -> std::result::Result<SessionOutcome, SessionError>
where
    I: IntoIterator<Item = (&'a EegEpoch, usize)>,
{
    let mut state = ClassifierState::from_dense(&weights.classifier);
    let mut events = Vec::new();
    for (epoch, label) in stream {
        match adapt_step(weights, config, &mut state, hyper, epoch, label) {
            Ok(ev) => events.push(ev),
            Err(error) => return Err(SessionError { events, error }),
        }
    }
    if events.is_empty() {
        return Err(SessionError {
            events,
            error: OnlineError::EmptyStream,
        });
    }
    Ok(SessionOutcome { state, events })
}

use std::sync::{Arc, RwLock};

use super::{AdaptEvent, ClassifierState, OnlineError, OnlineHyperparams, Result};
use crate::dataset::EegEpoch;
use crate::model::{self, DenseLayer, ForwardOutput, ModelConfig, ModelWeights};

/// Read handle on the most recently published classifier.
#[derive(Debug, Clone)]
pub struct ClassifierSnapshots {
    slot: Arc<RwLock<Arc<DenseLayer>>>,
}

impl ClassifierSnapshots {
    pub fn current(&self) -> Arc<DenseLayer> {
        self.slot.read().expect("snapshot lock poisoned").clone()
    }
}

/// Owns one adaptation session: frozen backbone, mutable classifier state,
/// and an activation gate. Adaptation only runs after [`activate`](Self::activate).
///
/// Each successful step swaps in a new `Arc<DenseLayer>`; readers holding a
/// [`ClassifierSnapshots`] see either the old or the new head, never a mix.
#[derive(Debug)]
pub struct OnlineEngine {
    weights: ModelWeights,
    config: ModelConfig,
    hyper: OnlineHyperparams,
    state: ClassifierState,
    published: Arc<RwLock<Arc<DenseLayer>>>,
    active: bool,
}

impl OnlineEngine {
    pub fn new(weights: ModelWeights, config: ModelConfig, hyper: OnlineHyperparams) -> Result<Self> {
        weights.validate(&config)?;
        hyper.validate()?;
        let state = ClassifierState::from_dense(&weights.classifier);
        let published = Arc::new(RwLock::new(Arc::new(weights.classifier.clone())));
        Ok(Self {
            weights,
            config,
            hyper,
            state,
            published,
            active: false,
        })
    }

    pub fn activate(&mut self) {
        self.active = true;
    }

    pub fn deactivate(&mut self) {
        self.active = false;
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn snapshots(&self) -> ClassifierSnapshots {
        ClassifierSnapshots {
            slot: self.published.clone(),
        }
    }

    pub fn state(&self) -> &ClassifierState {
        &self.state
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Backbone plus the current classifier.
    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn into_weights(self) -> ModelWeights {
        self.weights
    }

    pub fn infer(&self, epoch: &EegEpoch) -> Result<ForwardOutput> {
        Ok(model::forward(&self.weights, &self.config, epoch)?)
    }

    pub fn adapt(&mut self, epoch: &EegEpoch, label: usize) -> Result<AdaptEvent> {
        if !self.active {
            return Err(OnlineError::NotActivated);
        }
        let event = super::adapt_step(
            &mut self.weights,
            &self.config,
            &mut self.state,
            &self.hyper,
            epoch,
            label,
        )?;
        let head = Arc::new(self.weights.classifier.clone());
        *self.published.write().expect("snapshot lock poisoned") = head;
        Ok(event)
    }
}

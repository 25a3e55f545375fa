//! Compact EEG motor-imagery inference engine built around an EEGNet variant,
//! with a streaming classifier-only training engine for adapting a frozen
//! backbone to new users.
//!
//! Layout:
//!
//! * [`tensor`]: single-precision kernels (grouped convolution, batch norm,
//!   ELU, time-axis pooling, dense, softmax).
//! * [`model`]: config-derived network shapes, the `EDAW` weight container,
//!   forward execution and footprint/MAC accounting.
//! * [`online`]: per-sample SGD-with-EMA-momentum updates of the dense head.
//! * [`dataset`]: EDF/EDF+ parsing, epoch extraction, montages, splits and
//!   the on-disk epoch store.
//! * [`harness`]: degradation, adaptation-gain and latency experiments plus
//!   JSON/CSV reports.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod dataset;
pub mod harness;
pub mod model;
pub mod online;
pub mod tensor;

pub use dataset::{EegEpoch, MiClass};
pub use model::{ModelConfig, ModelWeights};
pub use online::{ClassifierState, OnlineHyperparams};

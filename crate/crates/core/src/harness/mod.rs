//! Experiment orchestration: cross-subject degradation, online-adaptation
//! gain and host latency benchmarks, with versioned JSON/CSV reports.

mod bench;
mod degradation;
mod online;
mod report;
mod spec;

pub use bench::{percentile, run_bench, BenchEntry, LatencyStats, ENERGY_NOTE, UPDATE_SCOPE};
pub use degradation::{run_degradation_eval, DegradationReport, FoldAccuracy};
pub use online::{run_online_experiment, OnlineReport, SubjectOnline};
pub use report::{
    emit_report, parse_csv, render_csv, CsvTable, EnvironmentStamp, ExperimentReport, ReferenceConstants,
    ReferenceDevice, ReferenceOnline, ReportBody, ReportFormat, BENCH_CSV_HEADER, DEGRADATION_CSV_HEADER,
    ONLINE_CSV_HEADER, REPORT_SCHEMA_VERSION,
};
pub use spec::ExperimentSpec;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, EegEpoch, EpochStore};
use crate::model::{self, ModelConfig, ModelError, ModelWeights};
use crate::online::{OnlineError, SessionError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Online(#[from] OnlineError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("subject {subject}: {source}")]
    Session {
        subject: u32,
        #[source]
        source: SessionError,
    },
    #[error("split plan and weights disagree: {0}")]
    PlanMismatch(String),
    #[error("subject {subject} has an empty {half} half")]
    EmptyHalf { subject: u32, half: &'static str },
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("report: {0}")]
    Report(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Epochs per subject, in stored order.
pub type SubjectEpochs = BTreeMap<u32, Vec<EegEpoch>>;

/// How per-subject results are combined into one number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Mean of per-subject accuracies.
    #[default]
    Subject,
    /// Pooled correct / pooled total.
    Instance,
}

/// Correct-prediction tally.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn add(self, other: Tally) -> Tally {
        Tally {
            correct: self.correct + other.correct,
            total: self.total + other.total,
        }
    }
}

/// Combine per-subject tallies under `averaging`.
pub fn aggregate(tallies: &[Tally], averaging: Averaging) -> f64 {
    if tallies.is_empty() {
        return 0.0;
    }
    match averaging {
        Averaging::Subject => tallies.iter().map(Tally::accuracy).sum::<f64>() / tallies.len() as f64,
        Averaging::Instance => tallies.iter().fold(Tally::default(), |a, &b| a.add(b)).accuracy(),
    }
}

/// Top-1 accuracy of `weights` on `epochs` (ties go to the lowest class).
/// Never touches the weights.
pub fn evaluate<'a>(
    weights: &ModelWeights,
    config: &ModelConfig,
    epochs: impl IntoIterator<Item = &'a EegEpoch>,
) -> Result<Tally> {
    let mut t = Tally::default();
    for e in epochs {
        let out = model::forward(weights, config, e)?;
        t.total += 1;
        t.correct += usize::from(out.predicted() == e.label.index());
    }
    Ok(t)
}

/// Load the given subjects (all when `None`) from a store.
pub fn load_subjects(store: &EpochStore, subjects: Option<&[u32]>) -> Result<SubjectEpochs> {
    let ids = subjects.map_or_else(|| store.subject_ids(), <[u32]>::to_vec);
    ids.into_iter().map(|s| Ok((s, store.load_subject(s)?))).collect()
}

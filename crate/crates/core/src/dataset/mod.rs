//! Motor-imagery corpus ingestion: EDF/EDF+ parsing, labeled epoch
//! extraction, channel montages, evaluation splits and the epoch store.

pub mod edf;
mod extract;
mod ingest;
mod montage;
mod splits;
mod store;
pub mod synth;

pub use edf::{
    parse_edf, parse_edf_bytes, write_edf, write_edf_bytes, Annotation, EdfError, EdfHeader, EdfRecord, EdfSignal,
    SignalHeader,
};
pub use extract::{assemble_subject, extract_epochs, ClassMap, RunExtraction, RunRule, TrialPolicy};
pub use ingest::{find_corpus_files, ingest_corpus, CorpusFile, IngestOptions, IngestSummary};
pub use montage::{apply_montage, canonical_label, Montage, PHYSIONET_64};
pub use splits::{
    make_splits, Catalog, LosoFold, OnlineSplit, Protocol, SplitAssignments, SplitOptions, SplitPlan,
    SPLIT_SCHEMA_VERSION,
};
pub use store::{
    EpochStore, ExcludedSubject, StoreManifest, SubjectEntry, EPOCH_BLOB_MAGIC, EPOCH_BLOB_VERSION, MANIFEST_FILE,
    STORE_SCHEMA_VERSION,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Edf(#[from] EdfError),
    #[error("unknown annotation code {code:?} at {onset} s")]
    UnknownAnnotation { code: String, onset: f64 },
    #[error("signals sampled at {found} Hz, expected {expected} Hz")]
    SamplingRate { expected: f64, found: f64 },
    #[error("montage channel {channel:?} not present in epoch")]
    MissingChannel { channel: String },
    #[error("invalid montage {name}: {reason}")]
    InvalidMontage { name: String, reason: String },
    #[error("epoch data has {found} values, expected {channels} x {samples}")]
    EpochShape {
        channels: usize,
        samples: usize,
        found: usize,
    },
    #[error("epoch contains non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("split arithmetic: {0}")]
    Split(String),
    #[error("epoch store: {0}")]
    Store(String),
    #[error(transparent)]
    Archive(#[from] crate::archive::ArchiveError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {path}: {message}")]
    Json { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Four motor-imagery classes, indexed in `L, R, 0, F` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MiClass {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
    #[serde(rename = "0")]
    Rest,
    #[serde(rename = "F")]
    Feet,
}

impl MiClass {
    pub const ALL: [MiClass; 4] = [MiClass::Left, MiClass::Right, MiClass::Rest, MiClass::Feet];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            MiClass::Left => "L",
            MiClass::Right => "R",
            MiClass::Rest => "0",
            MiClass::Feet => "F",
        }
    }
}

impl fmt::Display for MiClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for MiClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown class {s:?} (L, R, 0, F)"))
    }
}

/// One labeled trial: `channels x samples` row-major matrix plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EegEpoch {
    pub subject: u32,
    pub run: u32,
    pub label: MiClass,
    pub onset_seconds: f64,
    channel_names: Vec<String>,
    samples: usize,
    data: Vec<f32>,
}

impl EegEpoch {
    pub fn new(
        subject: u32,
        run: u32,
        label: MiClass,
        onset_seconds: f64,
        channel_names: Vec<String>,
        samples: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if data.len() != channel_names.len() * samples || samples == 0 {
            return Err(DatasetError::EpochShape {
                channels: channel_names.len(),
                samples,
                found: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::NonFinite(i));
        }
        Ok(Self {
            subject,
            run,
            label,
            onset_seconds,
            channel_names,
            samples,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn row(&self, channel: usize) -> &[f32] {
        &self.data[channel * self.samples..(channel + 1) * self.samples]
    }
}

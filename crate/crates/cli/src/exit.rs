//! Error classification into process exit codes.

use eegodl::archive::ArchiveError;
use eegodl::dataset::{DatasetError, EdfError};
use eegodl::harness::HarnessError;
use eegodl::model::ModelError;
use eegodl::online::OnlineError;
use eegodl::tensor::TensorError;

pub const OTHER: u8 = 1;
pub const IO: u8 = 2;
pub const DATA: u8 = 3;
pub const NUMERIC: u8 = 4;
pub const USAGE: u8 = 64;

/// Bad flag combination or value detected after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Inputs that parse but cannot be used.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct DataError(pub String);

pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(code) = classify(cause) {
            return code;
        }
    }
    OTHER
}

fn classify(e: &(dyn std::error::Error + 'static)) -> Option<u8> {
    if e.is::<UsageError>() {
        return Some(USAGE);
    }
    if e.is::<DataError>() {
        return Some(DATA);
    }
    if e.is::<std::io::Error>() {
        return Some(IO);
    }
    if let Some(e) = e.downcast_ref::<HarnessError>() {
        return Some(harness(e));
    }
    if let Some(e) = e.downcast_ref::<OnlineError>() {
        return Some(online(e));
    }
    if let Some(e) = e.downcast_ref::<DatasetError>() {
        return Some(dataset(e));
    }
    if let Some(e) = e.downcast_ref::<ModelError>() {
        return Some(model(e));
    }
    if let Some(e) = e.downcast_ref::<ArchiveError>() {
        return Some(archive(e));
    }
    if let Some(e) = e.downcast_ref::<EdfError>() {
        return Some(edf(e));
    }
    if let Some(e) = e.downcast_ref::<TensorError>() {
        return Some(tensor(e));
    }
    None
}

fn harness(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Model(e) => model(e),
        HarnessError::Online(e) => online(e),
        HarnessError::Dataset(e) => dataset(e),
        HarnessError::Session { source, .. } => online(&source.error),
        HarnessError::Io { .. } => IO,
        HarnessError::Spec(_) => USAGE,
        HarnessError::PlanMismatch(_) | HarnessError::EmptyHalf { .. } | HarnessError::Report(_) => DATA,
    }
}

fn online(e: &OnlineError) -> u8 {
    match e {
        OnlineError::NonFinite(_) => NUMERIC,
        OnlineError::InvalidHyperparams(_) => USAGE,
        OnlineError::Model(e) => model(e),
        OnlineError::Tensor(e) => tensor(e),
        _ => DATA,
    }
}

fn dataset(e: &DatasetError) -> u8 {
    match e {
        DatasetError::Io { .. } => IO,
        DatasetError::Edf(e) => edf(e),
        DatasetError::Archive(e) => archive(e),
        _ => DATA,
    }
}

fn model(e: &ModelError) -> u8 {
    match e {
        ModelError::NonFinite { .. } => NUMERIC,
        ModelError::Tensor(e) => tensor(e),
        ModelError::Archive(e) => archive(e),
        _ => DATA,
    }
}

fn archive(e: &ArchiveError) -> u8 {
    match e {
        ArchiveError::Io { .. } => IO,
        _ => DATA,
    }
}

fn edf(e: &EdfError) -> u8 {
    match e {
        EdfError::Io { .. } => IO,
        _ => DATA,
    }
}

fn tensor(e: &TensorError) -> u8 {
    match e {
        TensorError::NanInput(_) => NUMERIC,
        _ => DATA,
    }
}

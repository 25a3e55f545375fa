use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, EegEpoch, Result};

/// The 64 recorded electrodes in file order, in 10-10 spelling.
pub const PHYSIONET_64: [&str; 64] = [
    "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "CP5", "CP3", "CP1",
    "CPz", "CP2", "CP4", "CP6", "Fp1", "Fpz", "Fp2", "AF7", "AF3", "AFz", "AF4", "AF8", "F7", "F5", "F3", "F1", "Fz",
    "F2", "F4", "F6", "F8", "FT7", "FT8", "T7", "T8", "T9", "T10", "TP7", "TP8", "P7", "P5", "P3", "P1", "Pz", "P2",
    "P4", "P6", "P8", "PO7", "PO3", "POz", "PO4", "PO8", "O1", "Oz", "O2", "Iz",
];

const STANDARD_19: [&str; 19] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T7", "C3", "Cz", "C4", "T8", "P7", "P3", "Pz", "P4", "P8", "O1", "O2",
];

const MOTOR_8: [&str; 8] = ["FC3", "FC4", "C3", "Cz", "C4", "CP3", "CPz", "CP4"];

/// Strip EDF label padding (`"Fc5."`, `"Cz.."`) and map to the 10-10
/// spelling when the electrode is known.
pub fn canonical_label(raw: &str) -> String {
    let trimmed = raw.trim().trim_end_matches('.');
    PHYSIONET_64
        .iter()
        .find(|k| k.eq_ignore_ascii_case(trimmed))
        .map_or_else(|| trimmed.to_string(), |k| k.to_string())
}

/// Named, ordered electrode subset used as model input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Montage {
    pub name: String,
    pub channels: Vec<String>,
}

impl Montage {
    pub fn new(name: impl Into<String>, channels: &[&str]) -> Self {
        Self {
            name: name.into(),
            channels: channels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn full_64() -> Self {
        Self::new("64ch", &PHYSIONET_64)
    }

    pub fn standard_19() -> Self {
        Self::new("19ch", &STANDARD_19)
    }

    pub fn motor_8() -> Self {
        Self::new("8ch", &MOTOR_8)
    }

    /// Built-in montage by name (`64ch`, `19ch`, `8ch`), else a JSON file path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match name_or_path {
            "64ch" | "64" => Ok(Self::full_64()),
            "19ch" | "19" => Ok(Self::standard_19()),
            "8ch" | "8" => Ok(Self::motor_8()),
            path => Self::load(Path::new(path)),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let m: Self = serde_json::from_str(&text).map_err(|e| DatasetError::Json {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| DatasetError::InvalidMontage {
            name: self.name.clone(),
            reason,
        };
        if self.channels.is_empty() {
            return Err(invalid("no channels".into()));
        }
        for (i, ch) in self.channels.iter().enumerate() {
            if !PHYSIONET_64.iter().any(|k| k.eq_ignore_ascii_case(ch)) {
                return Err(invalid(format!("{ch:?} is not a recorded electrode")));
            }
            if self.channels[..i].iter().any(|p| p.eq_ignore_ascii_case(ch)) {
                return Err(invalid(format!("{ch:?} listed twice")));
            }
        }
        Ok(())
    }
}

/// Select and reorder rows to match the montage. Matching ignores case.
pub fn apply_montage(epoch: &EegEpoch, montage: &Montage) -> Result<EegEpoch> {
    let names = epoch.channel_names();
    let mut data = Vec::with_capacity(montage.len() * epoch.samples());
    let mut picked = Vec::with_capacity(montage.len());
    for ch in &montage.channels {
        let idx = names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(ch))
            .ok_or_else(|| DatasetError::MissingChannel { channel: ch.clone() })?;
        data.extend_from_slice(epoch.row(idx));
        picked.push(names[idx].clone());
    }
    EegEpoch::new(
        epoch.subject,
        epoch.run,
        epoch.label,
        epoch.onset_seconds,
        picked,
        epoch.samples(),
        data,
    )
}

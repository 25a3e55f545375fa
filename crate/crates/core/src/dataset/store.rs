//! On-disk epoch store: one named-tensor archive per subject plus a JSON
//! manifest describing the corpus.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Catalog, DatasetError, EegEpoch, MiClass, Montage, Result};
use crate::archive::{self, NamedTensor};

pub const EPOCH_BLOB_MAGIC: &[u8; 4] = b"EDAE";
pub const EPOCH_BLOB_VERSION: u32 = 1;
pub const STORE_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub subject: u32,
    /// Blob file name relative to the store root.
    pub file: String,
    pub instances: usize,
    pub class_counts: BTreeMap<MiClass, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedSubject {
    pub subject: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub schema_version: u32,
    pub montage: Montage,
    pub window_seconds: f64,
    pub sampling_rate: f64,
    pub samples: usize,
    pub trials_per_class: usize,
    pub subjects: Vec<SubjectEntry>,
    pub excluded: Vec<ExcludedSubject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EpochMeta {
    run: u32,
    label: MiClass,
    onset_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlobMeta {
    subject: u32,
    channel_names: Vec<String>,
    samples: usize,
    epochs: Vec<EpochMeta>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct EpochStore {
    root: PathBuf,
    manifest: StoreManifest,
}

impl EpochStore {
    /// Write all subjects and the manifest under `root`, replacing any
    /// previous store there. `manifest.subjects` is filled in here.
    pub fn create(root: &Path, mut manifest: StoreManifest, subjects: &[(u32, Vec<EegEpoch>)]) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(io_err(root))?;
        manifest.schema_version = STORE_SCHEMA_VERSION;
        manifest.subjects.clear();
        for (subject, epochs) in subjects {
            let file = format!("S{subject:03}.edae");
            write_blob(&root.join(&file), *subject, epochs, &manifest)?;
            let mut class_counts = BTreeMap::new();
            for e in epochs {
                *class_counts.entry(e.label).or_default() += 1;
            }
            manifest.subjects.push(SubjectEntry {
                subject: *subject,
                file,
                instances: epochs.len(),
                class_counts,
            });
        }
        manifest.subjects.sort_by_key(|s| s.subject);
        manifest.excluded.sort_by_key(|s| s.subject);
        let path = root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text).map_err(io_err(&path))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: StoreManifest = serde_json::from_str(&text).map_err(|e| DatasetError::Json {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if manifest.schema_version != STORE_SCHEMA_VERSION {
            return Err(DatasetError::Store(format!(
                "unsupported store schema version {}",
                manifest.schema_version
            )));
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn subject_ids(&self) -> Vec<u32> {
        self.manifest.subjects.iter().map(|s| s.subject).collect()
    }

    pub fn catalog(&self) -> Catalog {
        Catalog::new(self.manifest.subjects.iter().map(|s| (s.subject, s.instances)))
    }

    pub fn load_subject(&self, subject: u32) -> Result<Vec<EegEpoch>> {
        let entry = self
            .manifest
            .subjects
            .iter()
            .find(|s| s.subject == subject)
            .ok_or_else(|| DatasetError::Store(format!("subject {subject} not in store")))?;
        let path = self.root.join(&entry.file);
        let archive = archive::read_file::<BlobMeta>(&path, EPOCH_BLOB_MAGIC, EPOCH_BLOB_VERSION)?;
        let meta = archive.meta;
        if meta.subject != subject || meta.epochs.len() != archive.tensors.len() {
            return Err(DatasetError::Store(format!(
                "{} does not match its manifest entry",
                path.display()
            )));
        }
        meta.epochs
            .into_iter()
            .zip(archive.tensors)
            .map(|(m, t)| {
                EegEpoch::new(
                    subject,
                    m.run,
                    m.label,
                    m.onset_seconds,
                    meta.channel_names.clone(),
                    meta.samples,
                    t.data,
                )
            })
            .collect()
    }
}

fn write_blob(path: &Path, subject: u32, epochs: &[EegEpoch], manifest: &StoreManifest) -> Result<()> {
    let channel_names = epochs
        .first()
        .map_or_else(|| manifest.montage.channels.clone(), |e| e.channel_names().to_vec());
    let samples = epochs.first().map_or(manifest.samples, EegEpoch::samples);
    if epochs
        .iter()
        .any(|e| e.channel_names() != channel_names.as_slice() || e.samples() != samples)
    {
        return Err(DatasetError::Store(format!("subject {subject} epochs differ in shape")));
    }
    let meta = BlobMeta {
        subject,
        channel_names,
        samples,
        epochs: epochs
            .iter()
            .map(|e| EpochMeta {
                run: e.run,
                label: e.label,
                onset_seconds: e.onset_seconds,
            })
            .collect(),
    };
    let tensors: Vec<NamedTensor> = epochs
        .iter()
        .enumerate()
        .map(|(i, e)| {
            NamedTensor::new(
                format!("epoch.{i:04}"),
                vec![e.channels(), e.samples()],
                e.data().to_vec(),
            )
        })
        .collect();
    archive::write_file(path, EPOCH_BLOB_MAGIC, EPOCH_BLOB_VERSION, &meta, &tensors)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn epochs(subject: u32, n: usize) -> Vec<EegEpoch> {
        (0..n)
            .map(|i| {
                EegEpoch::new(
                    subject,
                    4,
                    MiClass::from_index(i % 4).unwrap(),
                    i as f64 * 4.1,
                    vec!["C3".into(), "Cz".into()],
                    3,
                    (0..6).map(|v| (v + i) as f32 * 0.5).collect(),
                )
                .unwrap()
            })
            .collect()
    }

    fn manifest() -> StoreManifest {
        StoreManifest {
            schema_version: STORE_SCHEMA_VERSION,
            montage: Montage::new("two", &["C3", "Cz"]),
            window_seconds: 3.0 / 160.0,
            sampling_rate: 160.0,
            samples: 3,
            trials_per_class: 2,
            subjects: Vec::new(),
            excluded: vec![ExcludedSubject {
                subject: 9,
                reason: "class F has 1 trials, need 2".into(),
            }],
        }
    }

    #[test]
    fn roundtrip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let data = vec![(2, epochs(2, 8)), (1, epochs(1, 4))];
        let store = EpochStore::create(dir.path(), manifest(), &data).unwrap();
        assert_eq!(store.subject_ids(), [1, 2]);
        let reopened = EpochStore::open(dir.path()).unwrap();
        assert_eq!(reopened.manifest(), store.manifest());
        assert_eq!(reopened.load_subject(2).unwrap(), data[0].1);
        assert_eq!(reopened.catalog().subjects[&2], 8);
        assert_eq!(reopened.manifest().subjects[1].class_counts[&MiClass::Left], 2);
        assert!(reopened.load_subject(7).is_err());
    }

    #[test]
    fn corrupted_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        EpochStore::create(dir.path(), manifest(), &[(1, epochs(1, 2))]).unwrap();
        let blob = dir.path().join("S001.edae");
        let bytes = std::fs::read(&blob).unwrap();
        std::fs::write(&blob, &bytes[..bytes.len() - 9]).unwrap();
        let store = EpochStore::open(dir.path()).unwrap();
        assert!(matches!(store.load_subject(1), Err(DatasetError::Archive(_))));
    }
}

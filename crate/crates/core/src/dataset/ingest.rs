use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    apply_montage, assemble_subject, extract_epochs, parse_edf, ClassMap, DatasetError, EegEpoch, EpochStore,
    ExcludedSubject, Montage, Result, StoreManifest, SubjectEntry, TrialPolicy, STORE_SCHEMA_VERSION,
};

/// A recording named `S<subject>R<run>.edf`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CorpusFile {
    pub subject: u32,
    pub run: u32,
    pub path: PathBuf,
}

fn parse_name(name: &str) -> Option<(u32, u32)> {
    let stem = name.strip_suffix(".edf").or_else(|| name.strip_suffix(".EDF"))?;
    let rest = stem.strip_prefix(['S', 's'])?;
    let r = rest.find(['R', 'r'])?;
    let (s, run) = (&rest[..r], &rest[r + 1..]);
    if s.is_empty() || run.is_empty() || !s.bytes().chain(run.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((s.parse().ok()?, run.parse().ok()?))
}

/// Recursively list recordings under `root`, sorted by (subject, run).
pub fn find_corpus_files(root: &Path) -> Result<Vec<CorpusFile>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir).map_err(|source| DatasetError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        for entry in entries {
            let entry = entry.map_err(|source| DatasetError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Some((subject, run)) = path.file_name().and_then(|n| n.to_str()).and_then(parse_name) {
                out.push(CorpusFile { subject, run, path });
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub montage: Montage,
    pub window_seconds: f64,
    pub class_map: ClassMap,
    pub policy: TrialPolicy,
    /// Restrict to these subjects; `None` keeps all.
    pub subjects: Option<Vec<u32>>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            montage: Montage::full_64(),
            window_seconds: 3.0,
            class_map: ClassMap::default(),
            policy: TrialPolicy::default(),
            subjects: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub files_read: usize,
    pub kept: Vec<SubjectEntry>,
    pub excluded: Vec<ExcludedSubject>,
    pub skipped_short: usize,
    pub skipped_out_of_range: usize,
}

struct SubjectResult {
    subject: u32,
    files: usize,
    skipped_short: usize,
    skipped_out_of_range: usize,
    outcome: std::result::Result<Vec<EegEpoch>, String>,
}

fn ingest_subject(subject: u32, files: &[&CorpusFile], opts: &IngestOptions) -> SubjectResult {
    let mut res = SubjectResult {
        subject,
        files: 0,
        skipped_short: 0,
        skipped_out_of_range: 0,
        outcome: Err(String::new()),
    };
    let mut runs = Vec::new();
    for f in files {
        res.files += 1;
        let extracted = parse_edf(&f.path).map_err(DatasetError::from).and_then(|rec| {
            extract_epochs(
                &rec,
                &opts.class_map,
                subject,
                f.run,
                opts.window_seconds,
                opts.policy.sampling_rate,
            )
        });
        match extracted {
            Ok(ex) => {
                res.skipped_short += ex.skipped_short;
                res.skipped_out_of_range += ex.skipped_out_of_range;
                runs.push(ex);
            }
            Err(e) => {
                res.outcome = Err(format!("{}: {e}", f.path.display()));
                return res;
            }
        }
    }
    res.outcome = assemble_subject(&runs, &opts.policy).and_then(|epochs| {
        epochs
            .iter()
            .map(|e| apply_montage(e, &opts.montage))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.to_string())
    });
    res
}

/// Read every relevant recording under `input`, validate and balance each
/// subject, and write the epoch store to `output`.
///
/// A subject whose files fail to parse or whose trial counts fall short is
/// excluded with a reason; the rest of the corpus still ingests.
pub fn ingest_corpus(input: &Path, output: &Path, opts: &IngestOptions) -> Result<IngestSummary> {
    opts.montage.validate()?;
    let runs = opts.class_map.runs();
    let files = find_corpus_files(input)?;
    let mut by_subject: BTreeMap<u32, Vec<&CorpusFile>> = BTreeMap::new();
    for f in &files {
        let wanted = opts.subjects.as_ref().is_none_or(|s| s.contains(&f.subject));
        if wanted && runs.contains(&f.run) {
            by_subject.entry(f.subject).or_default().push(f);
        }
    }
    let results: Vec<SubjectResult> = by_subject
        .par_iter()
        .map(|(&s, fs)| ingest_subject(s, fs, opts))
        .collect();

    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    let (mut files_read, mut short, mut oor) = (0, 0, 0);
    for r in results {
        files_read += r.files;
        short += r.skipped_short;
        oor += r.skipped_out_of_range;
        match r.outcome {
            Ok(epochs) => kept.push((r.subject, epochs)),
            Err(reason) => excluded.push(ExcludedSubject {
                subject: r.subject,
                reason,
            }),
        }
    }
    let manifest = StoreManifest {
        schema_version: STORE_SCHEMA_VERSION,
        montage: opts.montage.clone(),
        window_seconds: opts.window_seconds,
        sampling_rate: opts.policy.sampling_rate,
        samples: (opts.window_seconds * opts.policy.sampling_rate).round() as usize,
        trials_per_class: opts.policy.trials_per_class,
        subjects: Vec::new(),
        excluded,
    };
    let store = EpochStore::create(output, manifest, &kept)?;
    Ok(IngestSummary {
        files_read,
        kept: store.manifest().subjects.clone(),
        excluded: store.manifest().excluded.clone(),
        skipped_short: short,
        skipped_out_of_range: oor,
    })
}

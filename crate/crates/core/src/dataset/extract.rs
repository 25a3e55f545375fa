use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DatasetError, EdfRecord, EegEpoch, MiClass, Result};

/// Which annotation codes map to which class in which runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRule {
    pub runs: Vec<u32>,
    pub codes: BTreeMap<String, MiClass>,
}

/// Annotation-to-class mapping for a corpus, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMap {
    pub rules: Vec<RunRule>,
    /// Annotation code marking rest periods; one window per rest event is a
    /// rest-class candidate.
    pub rest_code: String,
    /// Codes that may appear without being mapped (anything else is an error).
    pub known_codes: Vec<String>,
}

impl Default for ClassMap {
    /// Imagined left/right fist runs 4, 8, 12 give L (T1) and R (T2); imagined
    /// fists/feet runs 6, 10, 14 give F (T2); T0 rest in those runs gives 0.
    fn default() -> Self {
        let rule = |runs: [u32; 3], pairs: &[(&str, MiClass)]| RunRule {
            runs: runs.to_vec(),
            codes: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        };
        Self {
            rules: vec![
                rule([4, 8, 12], &[("T1", MiClass::Left), ("T2", MiClass::Right)]),
                rule([6, 10, 14], &[("T2", MiClass::Feet)]),
            ],
            rest_code: "T0".into(),
            known_codes: vec!["T0".into(), "T1".into(), "T2".into()],
        }
    }
}

impl ClassMap {
    pub fn rule_for(&self, run: u32) -> Option<&RunRule> {
        self.rules.iter().find(|r| r.runs.contains(&run))
    }

    pub fn runs(&self) -> Vec<u32> {
        let mut runs: Vec<u32> = self.rules.iter().flat_map(|r| r.runs.clone()).collect();
        runs.sort_unstable();
        runs.dedup();
        runs
    }
}

/// Per-subject trial-count validation and class balancing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPolicy {
    /// Every class must reach this count; each class is then cut to it.
    pub trials_per_class: usize,
    pub sampling_rate: f64,
}

impl Default for TrialPolicy {
    fn default() -> Self {
        Self {
            trials_per_class: 21,
            sampling_rate: 160.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunExtraction {
    pub subject: u32,
    pub run: u32,
    /// Task epochs (L/R/F) in onset order.
    pub task: Vec<EegEpoch>,
    /// Every qualifying rest window; balancing happens in [`assemble_subject`].
    pub rest_candidates: Vec<EegEpoch>,
    /// Events shorter than the window.
    pub skipped_short: usize,
    /// Events whose window runs past the end of the recording.
    pub skipped_out_of_range: usize,
    /// Raw annotation counts per code.
    pub event_counts: BTreeMap<String, usize>,
}

fn canonical_names(record: &EdfRecord) -> Vec<String> {
    record
        .signals
        .iter()
        .map(|s| super::canonical_label(&s.header.label))
        .collect()
}

/// Cut the first `window_seconds` after each qualifying event onset.
pub fn extract_epochs(
    record: &EdfRecord,
    class_map: &ClassMap,
    subject: u32,
    run: u32,
    window_seconds: f64,
    sampling_rate: f64,
) -> Result<RunExtraction> {
    let fs = record.common_sampling_rate().unwrap_or(f64::NAN);
    if fs != sampling_rate {
        return Err(DatasetError::SamplingRate {
            expected: sampling_rate,
            found: fs,
        });
    }
    let window = (window_seconds * fs).round() as usize;
    let names = canonical_names(record);
    let physical: Vec<Vec<f64>> = record.signals.iter().map(|s| s.physical()).collect();
    let total = physical.first().map_or(0, Vec::len);
    let rule = class_map.rule_for(run);

    let mut out = RunExtraction {
        subject,
        run,
        ..Default::default()
    };
    for ann in &record.annotations {
        let code = ann.text.trim();
        if !class_map.known_codes.iter().any(|k| k == code) {
            return Err(DatasetError::UnknownAnnotation {
                code: code.into(),
                onset: ann.onset,
            });
        }
        *out.event_counts.entry(code.to_string()).or_default() += 1;
        let Some(rule) = rule else { continue };
        let label = if code == class_map.rest_code {
            Some(MiClass::Rest)
        } else {
            rule.codes.get(code).copied()
        };
        let Some(label) = label else { continue };

        if let Some(d) = ann.duration {
            // 1e-9 slack: a 3 s window fits a 3 s event
            if d + 1e-9 < window_seconds {
                out.skipped_short += 1;
                continue;
            }
        }
        let start = (ann.onset * fs).round();
        if start < 0.0 || start as usize + window > total {
            out.skipped_out_of_range += 1;
            continue;
        }
        let start = start as usize;
        let mut data = Vec::with_capacity(names.len() * window);
        for ch in &physical {
            data.extend(ch[start..start + window].iter().map(|&v| v as f32));
        }
        let epoch = EegEpoch::new(subject, run, label, ann.onset, names.clone(), window, data)?;
        if label == MiClass::Rest {
            out.rest_candidates.push(epoch);
        } else {
            out.task.push(epoch);
        }
    }
    Ok(out)
}

/// Combine one subject's runs into a balanced epoch list, or explain why the
/// subject fails trial-count validation.
///
/// Task classes keep their first `trials_per_class` epochs in (run, onset)
/// order. Rest keeps `trials_per_class` windows spread evenly over all rest
/// candidates (index `floor(i * n / k)`). The result is in (run, onset) order.
pub fn assemble_subject(runs: &[RunExtraction], policy: &TrialPolicy) -> std::result::Result<Vec<EegEpoch>, String> {
    let k = policy.trials_per_class;
    let mut ordered: Vec<&RunExtraction> = runs.iter().collect();
    ordered.sort_by_key(|r| r.run);

    let mut kept: Vec<EegEpoch> = Vec::new();
    for class in [MiClass::Left, MiClass::Right, MiClass::Feet] {
        let all: Vec<&EegEpoch> = ordered
            .iter()
            .flat_map(|r| r.task.iter())
            .filter(|e| e.label == class)
            .collect();
        if all.len() < k {
            return Err(format!("class {class} has {} trials, need {k}", all.len()));
        }
        kept.extend(all.into_iter().take(k).cloned());
    }
    let rest: Vec<&EegEpoch> = ordered.iter().flat_map(|r| r.rest_candidates.iter()).collect();
    if rest.len() < k {
        return Err(format!("class 0 has {} rest windows, need {k}", rest.len()));
    }
    let n = rest.len();
    kept.extend((0..k).map(|i| rest[i * n / k].clone()));

    if let Some(first) = kept.first() {
        let names = first.channel_names();
        if kept.iter().any(|e| e.channel_names() != names) {
            return Err("runs disagree on channel layout".into());
        }
    }
    kept.sort_by(|a, b| {
        (a.run, a.onset_seconds)
            .partial_cmp(&(b.run, b.onset_seconds))
            .expect("finite onsets")
    });
    Ok(kept)
}

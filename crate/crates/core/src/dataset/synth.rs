//! Synthetic Physionet-style recordings for tests, demos and benchmarks.
//!
//! Each run is a 64-channel, 160 Hz EDF+ record with alternating rest and
//! task events. Task events add a class-specific oscillation over a class
//! specific electrode group on top of uniform noise, so the classes are
//! learnable but not trivially so. Everything is seeded.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::edf::{write_edf, Annotation, EdfHeader, EdfRecord, EdfSignal, SignalHeader};
use super::{ClassMap, DatasetError, MiClass, Result, PHYSIONET_64};

const PHYSICAL_RANGE: f64 = 8092.0;

/// One synthetic run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub subject: u32,
    pub run: u32,
    /// Annotation codes in recording order.
    pub events: Vec<String>,
    pub task_seconds: f64,
    pub rest_seconds: f64,
    pub sampling_rate: usize,
    /// Class oscillation amplitude in microvolts.
    pub amplitude: f64,
    /// Half-width of the uniform background noise in microvolts.
    pub noise: f64,
    pub seed: u64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            subject: 1,
            run: 4,
            events: Self::alternating(8, 7, 15),
            task_seconds: 4.1,
            rest_seconds: 4.2,
            sampling_rate: 160,
            amplitude: 20.0,
            noise: 10.0,
            seed: 0,
        }
    }
}

impl RunSpec {
    /// `T0 T1 T0 T2 T0 T1 ...` until every count is used up.
    pub fn alternating(t1: usize, t2: usize, t0: usize) -> Vec<String> {
        let (mut t1, mut t2, mut t0) = (t1, t2, t0);
        let mut out = Vec::with_capacity(t0 + t1 + t2);
        let mut next_t1 = true;
        while t0 + t1 + t2 > 0 {
            if t0 > 0 {
                out.push("T0".to_string());
                t0 -= 1;
            }
            let pick_t1 = (next_t1 && t1 > 0) || t2 == 0;
            if pick_t1 && t1 > 0 {
                out.push("T1".to_string());
                t1 -= 1;
            } else if t2 > 0 {
                out.push("T2".to_string());
                t2 -= 1;
            }
            next_t1 = !next_t1;
        }
        out
    }

    fn duration_of(&self, code: &str) -> f64 {
        if code == "T0" {
            self.rest_seconds
        } else {
            self.task_seconds
        }
    }
}

/// EDF-style label: Physionet capitalisation padded with dots to 4 characters.
fn file_label(name: &str) -> String {
    let mut s: String = name
        .chars()
        .enumerate()
        .map(|(i, c)| {
            if i == 0 {
                c.to_ascii_uppercase()
            } else {
                c.to_ascii_lowercase()
            }
        })
        .collect();
    while s.len() < 4 {
        s.push('.');
    }
    s
}

/// Electrode group and oscillation frequency carrying each class.
fn class_pattern(class: MiClass) -> (&'static [&'static str], f64) {
    match class {
        MiClass::Left => (&["FC4", "C4", "CP4", "C2", "C6", "FC2"], 11.0),
        MiClass::Right => (&["FC3", "C3", "CP3", "C1", "C5", "FC1"], 13.0),
        MiClass::Feet => (&["FCz", "Cz", "CPz", "C1", "C2"], 19.0),
        MiClass::Rest => (&["FC3", "FC4", "C3", "C4", "CP3", "CP4", "Cz", "CPz"], 7.0),
    }
}

fn event_class(map: &ClassMap, run: u32, code: &str) -> Option<MiClass> {
    let rule = map.rule_for(run)?;
    if code == map.rest_code {
        Some(MiClass::Rest)
    } else {
        rule.codes.get(code).copied()
    }
}

/// Build one run as an in-memory record.
pub fn synthetic_run(spec: &RunSpec) -> EdfRecord {
    let fs = spec.sampling_rate;
    let map = ClassMap::default();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (u64::from(spec.subject) << 32) ^ (u64::from(spec.run) << 16));
    // per-subject electrode gains, fixed across runs
    let mut subject_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ u64::from(spec.subject).wrapping_mul(0x9e37_79b9));
    let gains: Vec<f64> = (0..PHYSIONET_64.len())
        .map(|_| subject_rng.random_range(0.6..1.4))
        .collect();

    let mut annotations = Vec::with_capacity(spec.events.len());
    let mut t = 0.0;
    for code in &spec.events {
        let d = spec.duration_of(code);
        annotations.push(Annotation {
            onset: t,
            duration: Some(d),
            text: code.clone(),
        });
        t += d;
    }
    let data_records = t.ceil() as usize + 1;
    let total = data_records * fs;

    let mut signal: Vec<Vec<f64>> = (0..PHYSIONET_64.len())
        .map(|_| (0..total).map(|_| rng.random_range(-spec.noise..=spec.noise)).collect())
        .collect();
    for ann in &annotations {
        let Some(class) = event_class(&map, spec.run, &ann.text) else {
            continue;
        };
        let (group, freq) = class_pattern(class);
        let phase = rng.random_range(0.0..TAU);
        let start = (ann.onset * fs as f64).round() as usize;
        let len = (ann.duration.unwrap_or(0.0) * fs as f64).round() as usize;
        for name in group {
            let ch = PHYSIONET_64.iter().position(|k| k == name).expect("known electrode");
            let amp = spec.amplitude * gains[ch];
            for (i, v) in signal[ch][start..(start + len).min(total)].iter_mut().enumerate() {
                *v += amp * (TAU * freq * i as f64 / fs as f64 + phase).sin();
            }
        }
    }

    let signals = PHYSIONET_64
        .iter()
        .zip(signal)
        .map(|(name, values)| EdfSignal {
            header: SignalHeader {
                label: file_label(name),
                transducer: String::new(),
                physical_dimension: "uV".into(),
                physical_min: -PHYSICAL_RANGE,
                physical_max: PHYSICAL_RANGE,
                digital_min: -PHYSICAL_RANGE as i32,
                digital_max: PHYSICAL_RANGE as i32,
                prefiltering: "HP:0Hz LP:0Hz N:0Hz".into(),
                samples_per_record: fs,
                reserved: String::new(),
            },
            digital: values
                .into_iter()
                .map(|v| v.round().clamp(-PHYSICAL_RANGE, PHYSICAL_RANGE) as i16)
                .collect(),
        })
        .collect();

    EdfRecord {
        header: EdfHeader {
            version: "0".into(),
            patient_id: format!("S{:03} X X X", spec.subject),
            recording_id: "Startdate 01-JAN-2009 X X synthetic".into(),
            start_date: "01.01.09".into(),
            start_time: "00.00.00".into(),
            reserved: "EDF+C".into(),
            data_records,
            record_duration: 1.0,
        },
        signals,
        annotations,
    }
}

/// Layout of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub subjects: Vec<u32>,
    /// Runs written per subject; left/right and fists/feet runs get
    /// different event mixes.
    pub runs: Vec<u32>,
    /// `(T1, T2, T0)` per run.
    pub events_per_run: (usize, usize, usize),
    pub amplitude: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            subjects: (1..=5).collect(),
            runs: vec![4, 6, 8, 10, 12, 14],
            events_per_run: (8, 8, 15),
            amplitude: 20.0,
            noise: 10.0,
            seed: 0,
        }
    }
}

/// File name in the corpus layout, e.g. `S001/S001R04.edf`.
pub fn run_path(root: &Path, subject: u32, run: u32) -> PathBuf {
    root.join(format!("S{subject:03}"))
        .join(format!("S{subject:03}R{run:02}.edf"))
}

/// Write every subject and run of `spec` under `root`.
pub fn write_corpus(root: &Path, spec: &CorpusSpec) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for &subject in &spec.subjects {
        let dir = root.join(format!("S{subject:03}"));
        std::fs::create_dir_all(&dir).map_err(|source| DatasetError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        for &run in &spec.runs {
            let (t1, t2, t0) = spec.events_per_run;
            let rec = synthetic_run(&RunSpec {
                subject,
                run,
                events: RunSpec::alternating(t1, t2, t0),
                amplitude: spec.amplitude,
                noise: spec.noise,
                seed: spec.seed,
                ..RunSpec::default()
            });
            let path = run_path(root, subject, run);
            write_edf(&rec, &path)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

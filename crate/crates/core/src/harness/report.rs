//! Versioned experiment reports.
//!
//! JSON carries the full report. CSV carries one table per report kind with
//! a fixed header (the `*_CSV_HEADER` constants); accuracies are fractions in
//! `[0, 1]`, latencies are microseconds.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BenchEntry, DegradationReport, HarnessError, OnlineReport, Result};
use crate::model::ConfigId;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Degradation table: one row per fold plus a `mean` row. The per-fold
/// `degradation` is `loso - louo` for that fold index.
pub const DEGRADATION_CSV_HEADER: &str =
    "schema_version,config,fold,leave_one_user_out,leave_one_session_out,degradation";

/// Online table: one row per subject plus a `mean` row.
pub const ONLINE_CSV_HEADER: &str =
    "schema_version,config,subject,pre_accuracy,post_accuracy,gain,adapt_samples,test_samples";

/// Bench table: one row per config.
pub const BENCH_CSV_HEADER: &str = "schema_version,config,reps,forward_p50_us,forward_p95_us,\
update_p50_us,update_p95_us,adapt_step_p50_us,adapt_step_p95_us,macs,params,stored_bytes";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            _ => Err(format!("unknown report format {s:?} (json, csv)")),
        }
    }
}

/// Build and host description. Contains no timestamps so that reruns
/// produce identical bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentStamp {
    pub crate_version: String,
    pub os: String,
    pub arch: String,
    pub profile: String,
    pub threads: usize,
}

impl EnvironmentStamp {
    pub fn current() -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            profile: if cfg!(debug_assertions) { "debug" } else { "release" }.into(),
            threads: rayon::current_num_threads(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOnline {
    pub config: ConfigId,
    pub pre_accuracy: f64,
    pub post_accuracy: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDevice {
    pub config: ConfigId,
    pub inference_ms: f64,
    pub update_us: f64,
    pub footprint_kbytes: f64,
}

/// Published figures quoted for comparison. None of these are measured or
/// reproduced by this crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConstants {
    pub note: String,
    pub louo_accuracy: f64,
    pub loso_accuracy: f64,
    pub degradation: f64,
    pub online: Vec<ReferenceOnline>,
    pub device: Vec<ReferenceDevice>,
    /// Energy for the 19-channel, 2 s model at 370 MHz / 0.8 V.
    pub device_inference_mj: f64,
    pub device_update_uj: f64,
}

impl Default for ReferenceConstants {
    fn default() -> Self {
        let online = |config, pre, post, gain| ReferenceOnline {
            config,
            pre_accuracy: pre,
            post_accuracy: post,
            gain,
        };
        let device = |config, inference_ms, update_us, footprint_kbytes| ReferenceDevice {
            config,
            inference_ms,
            update_us,
            footprint_kbytes,
        };
        Self {
            note: "published reference values on the original microcontroller; not measured here".into(),
            louo_accuracy: 0.5007,
            loso_accuracy: 0.555,
            degradation: 0.0543,
            online: vec![
                online(ConfigId::Baseline, 0.5024, 0.5698, 0.0674),
                online(ConfigId::COne, 0.4910, 0.5641, 0.0731),
                online(ConfigId::CTwo, 0.4667, 0.5254, 0.0587),
            ],
            device: vec![
                device(ConfigId::Baseline, 49.3, 24.0, 24.9),
                device(ConfigId::COne, 14.9, 20.0, 15.6),
                device(ConfigId::CTwo, 2.1, 18.0, 8.5),
            ],
            device_inference_mj: 0.76,
            device_update_uj: 0.83,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "results", rename_all = "lowercase")]
pub enum ReportBody {
    Degradation(DegradationReport),
    Online(OnlineReport),
    Bench(Vec<BenchEntry>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    /// Config the experiment ran under; bench reports list theirs per entry.
    pub config: Option<ConfigId>,
    pub seed: u64,
    pub environment: EnvironmentStamp,
    #[serde(flatten)]
    pub body: ReportBody,
    pub reference: ReferenceConstants,
}

impl ExperimentReport {
    pub fn new(config: Option<ConfigId>, seed: u64, body: ReportBody) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            config,
            seed,
            environment: EnvironmentStamp::current(),
            body,
            reference: ReferenceConstants::default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| HarnessError::Report(e.to_string()))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(HarnessError::Report(format!(
                "unsupported report schema version {}",
                r.schema_version
            )));
        }
        Ok(r)
    }
}

fn config_name(c: Option<ConfigId>) -> &'static str {
    c.map_or("", ConfigId::as_str)
}

/// Render the report's CSV table.
pub fn render_csv(report: &ExperimentReport) -> String {
    let v = REPORT_SCHEMA_VERSION;
    let cfg = config_name(report.config);
    let mut out = String::new();
    match &report.body {
        ReportBody::Degradation(d) => {
            writeln!(out, "{DEGRADATION_CSV_HEADER}").unwrap();
            for (a, b) in d.louo_folds.iter().zip(&d.loso_folds) {
                let delta = b.accuracy - a.accuracy;
                writeln!(out, "{v},{cfg},{},{},{},{delta}", a.fold, a.accuracy, b.accuracy).unwrap();
            }
            writeln!(out, "{v},{cfg},mean,{},{},{}", d.louo_mean, d.loso_mean, d.degradation).unwrap();
        }
        ReportBody::Online(o) => {
            writeln!(out, "{ONLINE_CSV_HEADER}").unwrap();
            for s in &o.subjects {
                writeln!(
                    out,
                    "{v},{cfg},{},{},{},{},{},{}",
                    s.subject, s.pre_accuracy, s.post_accuracy, s.gain, s.adapt_samples, s.test_samples
                )
                .unwrap();
            }
            let adapt: usize = o.subjects.iter().map(|s| s.adapt_samples).sum();
            let test: usize = o.subjects.iter().map(|s| s.test_samples).sum();
            writeln!(
                out,
                "{v},{cfg},mean,{},{},{},{adapt},{test}",
                o.mean_pre, o.mean_post, o.mean_gain
            )
            .unwrap();
        }
        ReportBody::Bench(entries) => {
            writeln!(out, "{BENCH_CSV_HEADER}").unwrap();
            for e in entries {
                writeln!(
                    out,
                    "{v},{},{},{},{},{},{},{},{},{},{},{}",
                    e.config.as_str(),
                    e.forward.reps,
                    e.forward.p50_us,
                    e.forward.p95_us,
                    e.update.p50_us,
                    e.update.p95_us,
                    e.adapt_step.p50_us,
                    e.adapt_step.p95_us,
                    e.footprint.total_macs,
                    e.footprint.total_params,
                    e.footprint.stored_bytes
                )
                .unwrap();
            }
        }
    }
    out
}

/// Parsed CSV table: the header line and string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: String,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.split(',').position(|h| h == name)
    }

    /// Column `name` parsed as `f64`, one value per row.
    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .column(name)
            .ok_or_else(|| HarnessError::Report(format!("no column {name}")))?;
        self.rows
            .iter()
            .map(|r| {
                r[i].parse()
                    .map_err(|_| HarnessError::Report(format!("column {name}: {:?} is not a number", r[i])))
            })
            .collect()
    }
}

pub fn parse_csv(text: &str) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| HarnessError::Report(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    let rows = rdr
        .records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| HarnessError::Report(e.to_string()))
        })
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok(CsvTable { header, rows })
}

/// Write the report to `path` in `format`.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Csv => render_csv(report),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

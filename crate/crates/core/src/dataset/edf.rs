//! EDF / EDF+ reader and writer.
//!
//! Signals are kept as raw 16-bit digital samples; [`EdfSignal::physical`]
//! applies the header calibration. EDF+ annotation channels
//! (`EDF Annotations`) are decoded into [`Annotation`]s and not kept as
//! signals.

use std::fs;
use std::path::Path;

use thiserror::Error;

pub const ANNOTATION_LABEL: &str = "EDF Annotations";
const FIXED_HEADER: usize = 256;
const SIGNAL_HEADER: usize = 256;

#[derive(Debug, Error)]
pub enum EdfError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header field {field}: {value:?}")]
    MalformedHeader { field: String, value: String },
    #[error("truncated file: header and data records need {expected} bytes, file has {found}")]
    Truncated { expected: usize, found: usize },
    #[error("inconsistent signal layout: {0}")]
    InconsistentSignals(String),
    #[error("malformed annotation in data record {record}: {detail}")]
    MalformedAnnotation { record: usize, detail: String },
    #[error("value {value} does not fit the {width}-character field {field}")]
    FieldOverflow { field: String, value: String, width: usize },
}

pub type Result<T> = std::result::Result<T, EdfError>;

#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub version: String,
    pub patient_id: String,
    pub recording_id: String,
    /// `dd.mm.yy`
    pub start_date: String,
    /// `hh.mm.ss`
    pub start_time: String,
    /// `EDF+C`, `EDF+D` or empty for plain EDF.
    pub reserved: String,
    pub data_records: usize,
    pub record_duration: f64,
}

impl EdfHeader {
    pub fn is_edf_plus(&self) -> bool {
        self.reserved.starts_with("EDF+")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefiltering: String,
    pub samples_per_record: usize,
    pub reserved: String,
}

impl SignalHeader {
    pub fn is_annotation(&self) -> bool {
        self.label.trim() == ANNOTATION_LABEL
    }

    /// Digital-to-physical mapping: `digital_min -> physical_min` and
    /// `digital_max -> physical_max` exactly, linear in between.
    pub fn calibrate(&self, digital: i16) -> f64 {
        let t = (digital as f64 - self.digital_min as f64) / (self.digital_max as f64 - self.digital_min as f64);
        self.physical_min * (1.0 - t) + self.physical_max * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfSignal {
    pub header: SignalHeader,
    pub digital: Vec<i16>,
}

impl EdfSignal {
    pub fn physical(&self) -> Vec<f64> {
        self.digital.iter().map(|&d| self.header.calibrate(d)).collect()
    }

    pub fn sampling_rate(&self, record_duration: f64) -> f64 {
        self.header.samples_per_record as f64 / record_duration
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub onset: f64,
    pub duration: Option<f64>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfRecord {
    pub header: EdfHeader,
    /// Ordinary (non-annotation) signals in file order.
    pub signals: Vec<EdfSignal>,
    pub annotations: Vec<Annotation>,
}

impl EdfRecord {
    /// Common sampling rate of all ordinary signals, or `None` if they differ.
    pub fn common_sampling_rate(&self) -> Option<f64> {
        let mut rates = self
            .signals
            .iter()
            .map(|s| s.sampling_rate(self.header.record_duration));
        let first = rates.next()?;
        rates.all(|r| r == first).then_some(first)
    }

    pub fn duration_seconds(&self) -> f64 {
        self.header.data_records as f64 * self.header.record_duration
    }
}

fn ascii_field(bytes: &[u8], field: &str) -> Result<String> {
    if !bytes.iter().all(|b| (0x20..=0x7e).contains(b)) {
        return Err(EdfError::MalformedHeader {
            field: field.into(),
            value: String::from_utf8_lossy(bytes).into_owned(),
        });
    }
    Ok(String::from_utf8_lossy(bytes).trim_end().to_string())
}

fn numeric<T: std::str::FromStr>(bytes: &[u8], field: &str) -> Result<T> {
    let s = ascii_field(bytes, field)?;
    s.trim().parse().map_err(|_| EdfError::MalformedHeader {
        field: field.into(),
        value: s,
    })
}

pub fn parse_edf(path: &Path) -> Result<EdfRecord> {
    let bytes = fs::read(path).map_err(|source| EdfError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_edf_bytes(&bytes)
}

pub fn parse_edf_bytes(bytes: &[u8]) -> Result<EdfRecord> {
    if bytes.len() < FIXED_HEADER {
        return Err(EdfError::Truncated {
            expected: FIXED_HEADER,
            found: bytes.len(),
        });
    }
    let h = &bytes[..FIXED_HEADER];
    let version = ascii_field(&h[0..8], "version")?;
    if version.trim() != "0" {
        return Err(EdfError::MalformedHeader {
            field: "version".into(),
            value: version,
        });
    }
    let patient_id = ascii_field(&h[8..88], "patient_id")?;
    let recording_id = ascii_field(&h[88..168], "recording_id")?;
    let start_date = ascii_field(&h[168..176], "start_date")?;
    let start_time = ascii_field(&h[176..184], "start_time")?;
    let header_bytes: usize = numeric(&h[184..192], "header_bytes")?;
    let reserved = ascii_field(&h[192..236], "reserved")?;
    let declared_records: i64 = numeric(&h[236..244], "data_records")?;
    let record_duration: f64 = numeric(&h[244..252], "record_duration")?;
    let ns: usize = numeric(&h[252..256], "signal_count")?;

    if ns == 0 {
        return Err(EdfError::MalformedHeader {
            field: "signal_count".into(),
            value: "0".into(),
        });
    }
    if header_bytes != FIXED_HEADER + ns * SIGNAL_HEADER {
        return Err(EdfError::MalformedHeader {
            field: "header_bytes".into(),
            value: format!(
                "{header_bytes} (expected {} for {ns} signals)",
                FIXED_HEADER + ns * SIGNAL_HEADER
            ),
        });
    }
    if !(record_duration > 0.0) || !record_duration.is_finite() {
        return Err(EdfError::MalformedHeader {
            field: "record_duration".into(),
            value: record_duration.to_string(),
        });
    }
    if bytes.len() < header_bytes {
        return Err(EdfError::Truncated {
            expected: header_bytes,
            found: bytes.len(),
        });
    }

    // Signal header fields are stored column-wise: all labels, then all
    // transducers, and so on.
    let sh = &bytes[FIXED_HEADER..header_bytes];
    let mut offset = 0usize;
    let mut column = |width: usize| {
        let start = offset;
        offset += width * ns;
        (0..ns)
            .map(move |i| start + i * width..start + (i + 1) * width)
            .collect::<Vec<_>>()
    };
    let labels = column(16);
    let transducers = column(80);
    let dims = column(8);
    let pmins = column(8);
    let pmaxs = column(8);
    let dmins = column(8);
    let dmaxs = column(8);
    let prefilters = column(80);
    let sprs = column(8);
    let reserveds = column(32);

    let mut headers = Vec::with_capacity(ns);
    for i in 0..ns {
        let sig = SignalHeader {
            label: ascii_field(&sh[labels[i].clone()], "label")?,
            transducer: ascii_field(&sh[transducers[i].clone()], "transducer")?,
            physical_dimension: ascii_field(&sh[dims[i].clone()], "physical_dimension")?,
            physical_min: numeric(&sh[pmins[i].clone()], "physical_min")?,
            physical_max: numeric(&sh[pmaxs[i].clone()], "physical_max")?,
            digital_min: numeric(&sh[dmins[i].clone()], "digital_min")?,
            digital_max: numeric(&sh[dmaxs[i].clone()], "digital_max")?,
            prefiltering: ascii_field(&sh[prefilters[i].clone()], "prefiltering")?,
            samples_per_record: numeric(&sh[sprs[i].clone()], "samples_per_record")?,
            reserved: ascii_field(&sh[reserveds[i].clone()], "signal_reserved")?,
        };
        if sig.samples_per_record == 0 {
            return Err(EdfError::InconsistentSignals(format!(
                "signal {i} ({}) has 0 samples per record",
                sig.label
            )));
        }
        if sig.digital_max <= sig.digital_min || sig.digital_min < i16::MIN as i32 || sig.digital_max > i16::MAX as i32
        {
            return Err(EdfError::MalformedHeader {
                field: format!("digital range of signal {i} ({})", sig.label),
                value: format!("{}..{}", sig.digital_min, sig.digital_max),
            });
        }
        if !sig.is_annotation() && sig.physical_max == sig.physical_min {
            return Err(EdfError::MalformedHeader {
                field: format!("physical range of signal {i} ({})", sig.label),
                value: format!("{}..{}", sig.physical_min, sig.physical_max),
            });
        }
        headers.push(sig);
    }

    let record_bytes: usize = headers.iter().map(|s| s.samples_per_record * 2).sum();
    let data_len = bytes.len() - header_bytes;
    let data_records = if declared_records < 0 {
        // -1 while recording; infer from the file size
        if !data_len.is_multiple_of(record_bytes) {
            return Err(EdfError::InconsistentSignals(format!(
                "record count unknown and {data_len} data bytes is not a multiple of the {record_bytes}-byte record"
            )));
        }
        data_len / record_bytes
    } else {
        declared_records as usize
    };
    let expected = data_records
        .checked_mul(record_bytes)
        .and_then(|d| d.checked_add(header_bytes))
        .unwrap_or(usize::MAX);
    if bytes.len() < expected {
        return Err(EdfError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(EdfError::InconsistentSignals(format!(
            "{} trailing bytes after {data_records} records of {record_bytes} bytes",
            bytes.len() - expected
        )));
    }

    let mut digital: Vec<Vec<i16>> = headers
        .iter()
        .map(|s| Vec::with_capacity(s.samples_per_record * data_records))
        .collect();
    let mut annotations = Vec::new();
    let mut pos = header_bytes;
    for rec in 0..data_records {
        for (i, sig) in headers.iter().enumerate() {
            let n = sig.samples_per_record * 2;
            let chunk = &bytes[pos..pos + n];
            pos += n;
            if sig.is_annotation() {
                parse_tals(chunk, rec, &mut annotations)?;
            } else {
                digital[i].extend(chunk.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]])));
            }
        }
    }

    let signals = headers
        .into_iter()
        .zip(digital)
        .filter(|(h, _)| !h.is_annotation())
        .map(|(header, digital)| EdfSignal { header, digital })
        .collect();

    Ok(EdfRecord {
        header: EdfHeader {
            version,
            patient_id,
            recording_id,
            start_date,
            start_time,
            reserved,
            data_records,
            record_duration,
        },
        signals,
        annotations,
    })
}

/// Decode the time-stamped annotation lists of one data record.
/// Layout per TAL: `+onset[\x15duration]\x14text\x14...\x14\x00`.
fn parse_tals(chunk: &[u8], record: usize, out: &mut Vec<Annotation>) -> Result<()> {
    let bad = |detail: String| EdfError::MalformedAnnotation { record, detail };
    for tal in chunk.split(|&b| b == 0).filter(|t| !t.is_empty()) {
        let mut parts = tal.split(|&b| b == 0x14);
        let stamp = parts.next().unwrap_or_default();
        let stamp = std::str::from_utf8(stamp).map_err(|e| bad(e.to_string()))?;
        let (onset_s, duration_s) = match stamp.split_once('\u{15}') {
            Some((o, d)) => (o, Some(d)),
            None => (stamp, None),
        };
        if !onset_s.starts_with(['+', '-']) {
            return Err(bad(format!("onset {onset_s:?} lacks a sign")));
        }
        let onset: f64 = onset_s.parse().map_err(|_| bad(format!("onset {onset_s:?}")))?;
        let duration = match duration_s {
            Some(d) if !d.is_empty() => Some(d.parse::<f64>().map_err(|_| bad(format!("duration {d:?}")))?),
            _ => None,
        };
        for text in parts {
            if text.is_empty() {
                continue;
            }
            let text = std::str::from_utf8(text).map_err(|e| bad(e.to_string()))?;
            out.push(Annotation {
                onset,
                duration,
                text: text.to_string(),
            });
        }
    }
    Ok(())
}

fn fmt_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e8 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn put(out: &mut Vec<u8>, field: &str, value: &str, width: usize) -> Result<()> {
    if value.len() > width || !value.bytes().all(|b| (0x20..=0x7e).contains(&b)) {
        return Err(EdfError::FieldOverflow {
            field: field.into(),
            value: value.into(),
            width,
        });
    }
    out.extend_from_slice(value.as_bytes());
    out.extend(std::iter::repeat_n(b' ', width - value.len()));
    Ok(())
}

fn put_number(out: &mut Vec<u8>, field: &str, v: f64, width: usize) -> Result<()> {
    let s = fmt_number(v);
    if s.len() > width || s.parse::<f64>().ok() != Some(v) {
        return Err(EdfError::FieldOverflow {
            field: field.into(),
            value: s,
            width,
        });
    }
    put(out, field, &s, width)
}

fn fmt_seconds(v: f64) -> String {
    let s = fmt_number(v.abs());
    if v < 0.0 {
        format!("-{s}")
    } else {
        format!("+{s}")
    }
}

/// Serialize a record. Annotations (if any) go into an `EDF Annotations`
/// signal appended after the ordinary signals; each data record carries a
/// time-keeping TAL followed by the annotations whose onset falls inside it.
pub fn write_edf_bytes(record: &EdfRecord) -> Result<Vec<u8>> {
    let h = &record.header;
    let n_rec = h.data_records;
    for (i, s) in record.signals.iter().enumerate() {
        if s.digital.len() != s.header.samples_per_record * n_rec {
            return Err(EdfError::InconsistentSignals(format!(
                "signal {i} has {} samples, header implies {}",
                s.digital.len(),
                s.header.samples_per_record * n_rec
            )));
        }
    }

    let with_annotations = !record.annotations.is_empty() || h.is_edf_plus();
    let mut tal_blocks: Vec<Vec<u8>> = Vec::new();
    if with_annotations {
        let mut per_record: Vec<Vec<&Annotation>> = vec![Vec::new(); n_rec.max(1)];
        for a in &record.annotations {
            let idx = ((a.onset / h.record_duration).floor().max(0.0) as usize).min(n_rec.max(1) - 1);
            per_record[idx].push(a);
        }
        for (r, anns) in per_record.iter().enumerate().take(n_rec) {
            let mut block = Vec::new();
            block.extend_from_slice(fmt_seconds(r as f64 * h.record_duration).as_bytes());
            block.extend_from_slice(b"\x14\x14\x00");
            for a in anns {
                block.extend_from_slice(fmt_seconds(a.onset).as_bytes());
                if let Some(d) = a.duration {
                    block.push(0x15);
                    block.extend_from_slice(fmt_number(d).as_bytes());
                }
                block.push(0x14);
                block.extend_from_slice(a.text.as_bytes());
                block.extend_from_slice(b"\x14\x00");
            }
            tal_blocks.push(block);
        }
    }
    let ann_samples = tal_blocks
        .iter()
        .map(|b| b.len().div_ceil(2))
        .max()
        .unwrap_or(0)
        .max(if with_annotations { 30 } else { 0 });

    let mut headers: Vec<SignalHeader> = record.signals.iter().map(|s| s.header.clone()).collect();
    if with_annotations {
        headers.push(SignalHeader {
            label: ANNOTATION_LABEL.into(),
            transducer: String::new(),
            physical_dimension: String::new(),
            physical_min: -1.0,
            physical_max: 1.0,
            digital_min: -32768,
            digital_max: 32767,
            prefiltering: String::new(),
            samples_per_record: ann_samples,
            reserved: String::new(),
        });
    }
    let ns = headers.len();

    let mut out = Vec::new();
    put(&mut out, "version", &h.version, 8)?;
    put(&mut out, "patient_id", &h.patient_id, 80)?;
    put(&mut out, "recording_id", &h.recording_id, 80)?;
    put(&mut out, "start_date", &h.start_date, 8)?;
    put(&mut out, "start_time", &h.start_time, 8)?;
    put(
        &mut out,
        "header_bytes",
        &(FIXED_HEADER + ns * SIGNAL_HEADER).to_string(),
        8,
    )?;
    put(&mut out, "reserved", &h.reserved, 44)?;
    put(&mut out, "data_records", &n_rec.to_string(), 8)?;
    put_number(&mut out, "record_duration", h.record_duration, 8)?;
    put(&mut out, "signal_count", &ns.to_string(), 4)?;

    for s in &headers {
        put(&mut out, "label", &s.label, 16)?;
    }
    for s in &headers {
        put(&mut out, "transducer", &s.transducer, 80)?;
    }
    for s in &headers {
        put(&mut out, "physical_dimension", &s.physical_dimension, 8)?;
    }
    for s in &headers {
        put_number(&mut out, "physical_min", s.physical_min, 8)?;
    }
    for s in &headers {
        put_number(&mut out, "physical_max", s.physical_max, 8)?;
    }
    for s in &headers {
        put(&mut out, "digital_min", &s.digital_min.to_string(), 8)?;
    }
    for s in &headers {
        put(&mut out, "digital_max", &s.digital_max.to_string(), 8)?;
    }
    for s in &headers {
        put(&mut out, "prefiltering", &s.prefiltering, 80)?;
    }
    for s in &headers {
        put(&mut out, "samples_per_record", &s.samples_per_record.to_string(), 8)?;
    }
    for s in &headers {
        put(&mut out, "signal_reserved", &s.reserved, 32)?;
    }

    for r in 0..n_rec {
        for s in &record.signals {
            let n = s.header.samples_per_record;
            for d in &s.digital[r * n..(r + 1) * n] {
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
        if let Some(block) = tal_blocks.get(r).filter(|_| with_annotations) {
            out.extend_from_slice(block);
            out.extend(std::iter::repeat_n(0u8, ann_samples * 2 - block.len()));
        }
    }
    Ok(out)
}

pub fn write_edf(record: &EdfRecord, path: &Path) -> Result<()> {
    let bytes = write_edf_bytes(record)?;
    fs::write(path, bytes).map_err(|source| EdfError::Io {
        path: path.display().to_string(),
        source,
    })
}

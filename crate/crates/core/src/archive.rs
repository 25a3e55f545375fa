//! Single-file named-tensor archive.
//!
//! Byte layout, all integers little-endian:
//!
//! ```text
//! magic      [u8; 4]
//! version    u32
//! header_len u32
//! header     header_len bytes of UTF-8 JSON: {"meta": {...}, "tensors": [...]}
//! payload    concatenated f32 tensors
//! crc32      u32, IEEE CRC-32 of every preceding byte
//! ```
//!
//! Each tensor entry records `name`, `shape`, `dtype` (always `"f32"`),
//! `offset` (bytes from payload start) and `length` (element count).
//! Tensors are stored back to back in table order.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x} (file truncated or corrupted)")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("tensor table inconsistent: {0}")]
    Layout(String),
}

pub type Result<T> = std::result::Result<T, ArchiveError>;

pub const DTYPE_F32: &str = "f32";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: usize,
    pub length: usize,
}

#[derive(Serialize, Deserialize)]
struct Header<M> {
    meta: M,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive<M> {
    pub meta: M,
    pub tensors: Vec<NamedTensor>,
    pub info: ArchiveInfo,
}

impl<M> Archive<M> {
    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Framing facts about an encoded archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchiveInfo {
    pub version: u32,
    pub header_len: usize,
    pub payload_offset: usize,
    pub payload_len: usize,
    pub crc32: u32,
}

impl ArchiveInfo {
    /// Absolute byte range of a tensor entry within the file.
    pub fn byte_range(&self, entry: &TensorEntry) -> std::ops::Range<usize> {
        let start = self.payload_offset + entry.offset;
        start..start + entry.length * 4
    }
}

const PREFIX_LEN: usize = 12;

pub fn encode<M: Serialize>(magic: &[u8; 4], version: u32, meta: &M, tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0usize;
    for t in tensors {
        if t.data.len() != t.element_count() {
            return Err(ArchiveError::Layout(format!(
                "{}: shape {:?} needs {} values, got {}",
                t.name,
                t.shape,
                t.element_count(),
                t.data.len()
            )));
        }
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            dtype: DTYPE_F32.into(),
            offset,
            length: t.data.len(),
        });
        offset += t.data.len() * 4;
    }
    let header =
        serde_json::to_vec(&Header { meta, tensors: entries }).map_err(|e| ArchiveError::Header(e.to_string()))?;

    let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + offset + 4);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn decode<M: DeserializeOwned>(bytes: &[u8], magic: &[u8; 4], version: u32) -> Result<Archive<M>> {
    let found = &bytes[..bytes.len().min(4)];
    if found != magic {
        return Err(ArchiveError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        });
    }
    if bytes.len() >= 8 {
        let v = le_u32(bytes, 4);
        if v != version {
            return Err(ArchiveError::UnsupportedVersion {
                found: v,
                supported: version,
            });
        }
    }
    if bytes.len() < PREFIX_LEN + 4 {
        return Err(ArchiveError::Checksum {
            stored: 0,
            computed: crc32fast::hash(bytes),
        });
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = le_u32(bytes, bytes.len() - 4);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ArchiveError::Checksum { stored, computed });
    }

    let header_len = le_u32(bytes, 8) as usize;
    let payload_offset = PREFIX_LEN
        .checked_add(header_len)
        .filter(|&end| end <= body.len())
        .ok_or_else(|| ArchiveError::Header(format!("header length {header_len} exceeds file")))?;
    let header: Header<M> =
        serde_json::from_slice(&body[PREFIX_LEN..payload_offset]).map_err(|e| ArchiveError::Header(e.to_string()))?;
    let payload = &body[payload_offset..];

    let mut expected_offset = 0usize;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        if entry.dtype != DTYPE_F32 {
            return Err(ArchiveError::Layout(format!(
                "{}: dtype {:?} unsupported",
                entry.name, entry.dtype
            )));
        }
        let count: usize = entry.shape.iter().product();
        if count != entry.length {
            return Err(ArchiveError::Layout(format!(
                "{}: shape {:?} disagrees with length {}",
                entry.name, entry.shape, entry.length
            )));
        }
        if entry.offset != expected_offset {
            return Err(ArchiveError::Layout(format!(
                "{}: offset {} but previous tensor ends at {expected_offset}",
                entry.name, entry.offset
            )));
        }
        let end = entry.offset + entry.length * 4;
        if end > payload.len() {
            return Err(ArchiveError::Layout(format!(
                "{}: bytes {}..{end} beyond payload of {} bytes",
                entry.name,
                entry.offset,
                payload.len()
            )));
        }
        let data = payload[entry.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        tensors.push(NamedTensor::new(entry.name.clone(), entry.shape.clone(), data));
        expected_offset = end;
    }
    if expected_offset != payload.len() {
        return Err(ArchiveError::Layout(format!(
            "payload has {} bytes, tensor table covers {expected_offset}",
            payload.len()
        )));
    }

    Ok(Archive {
        meta: header.meta,
        tensors,
        info: ArchiveInfo {
            version,
            header_len,
            payload_offset,
            payload_len: payload.len(),
            crc32: stored,
        },
    })
}

/// Tensor table of an encoded archive without materializing tensor data.
pub fn tensor_table(bytes: &[u8]) -> Result<Vec<TensorEntry>> {
    if bytes.len() < PREFIX_LEN {
        return Err(ArchiveError::Header("file shorter than prefix".into()));
    }
    let header_len = le_u32(bytes, 8) as usize;
    let end = (PREFIX_LEN + header_len).min(bytes.len());
    let header: Header<serde_json::Value> =
        serde_json::from_slice(&bytes[PREFIX_LEN..end]).map_err(|e| ArchiveError::Header(e.to_string()))?;
    Ok(header.tensors)
}

pub fn write_file<M: Serialize>(
    path: &Path,
    magic: &[u8; 4],
    version: u32,
    meta: &M,
    tensors: &[NamedTensor],
) -> Result<()> {
    let bytes = encode(magic, version, meta, tensors)?;
    fs::write(path, bytes).map_err(|source| ArchiveError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_file<M: DeserializeOwned>(path: &Path, magic: &[u8; 4], version: u32) -> Result<Archive<M>> {
    let bytes = fs::read(path).map_err(|source| ArchiveError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes, magic, version)
}

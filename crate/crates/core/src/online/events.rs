use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

/// Telemetry for one adaptation step, taken before the update is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptEvent {
    pub sample_index: u64,
    pub loss: f32,
    pub predicted: usize,
    pub label: usize,
    pub grad_weight_norm: f32,
    pub grad_bias_norm: f32,
}

impl AdaptEvent {
    pub fn correct(&self) -> bool {
        self.predicted == self.label
    }
}

/// One JSON object per line.
pub fn write_event_log<W: Write>(mut out: W, events: &[AdaptEvent]) -> std::io::Result<()> {
    for ev in events {
        serde_json::to_writer(&mut out, ev)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_event_log<R: BufRead>(input: R) -> std::io::Result<Vec<AdaptEvent>> {
    input
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| {
            let l = l?;
            serde_json::from_str(&l).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        })
        .collect()
}

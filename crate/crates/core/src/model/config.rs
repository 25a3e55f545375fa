use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ModelError, Result};

/// The three input configurations evaluated for the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConfigId {
    /// 64 channels, 3 s window.
    #[serde(rename = "baseline")]
    Baseline,
    /// 19 channels, 2 s window.
    #[serde(rename = "C_One")]
    COne,
    /// 8 channels, 1 s window.
    #[serde(rename = "C_Two")]
    CTwo,
}

impl ConfigId {
    pub const ALL: [ConfigId; 3] = [ConfigId::Baseline, ConfigId::COne, ConfigId::CTwo];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfigId::Baseline => "baseline",
            ConfigId::COne => "C_One",
            ConfigId::CTwo => "C_Two",
        }
    }

    /// `(channels, window_seconds)`.
    pub fn input_size(self) -> (usize, f64) {
        match self {
            ConfigId::Baseline => (64, 3.0),
            ConfigId::COne => (19, 2.0),
            ConfigId::CTwo => (8, 1.0),
        }
    }

    /// Montage name conventionally paired with this config.
    pub fn montage_name(self) -> &'static str {
        match self {
            ConfigId::Baseline => "64ch",
            ConfigId::COne => "19ch",
            ConfigId::CTwo => "8ch",
        }
    }

    pub fn config(self) -> ModelConfig {
        let (ch, wl) = self.input_size();
        ModelConfig::build(ch, wl, ModelConfig::DEFAULT_SAMPLING_RATE).expect("preset configs are valid")
    }
}

impl fmt::Display for ConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfigId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "baseline" => Ok(ConfigId::Baseline),
            "c_one" | "cone" => Ok(ConfigId::COne),
            "c_two" | "ctwo" => Ok(ConfigId::CTwo),
            _ => Err(format!("unknown config id {s:?} (baseline, C_One, C_Two)")),
        }
    }
}

/// Fully derived network shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub channels: usize,
    pub window_seconds: f64,
    pub sampling_rate: u32,
    /// F1
    pub temporal_filters: usize,
    /// D
    pub depth_multiplier: usize,
    /// F2
    pub pointwise_filters: usize,
    pub pool1: usize,
    pub pool2: usize,
    pub num_classes: usize,
    /// fs / 2 taps
    pub temporal_kernel: usize,
    /// fs / 8 taps
    pub separable_kernel: usize,
    /// T = window_seconds * fs
    pub samples: usize,
}

impl ModelConfig {
    pub const DEFAULT_SAMPLING_RATE: u32 = 160;

    /// Derive every layer shape from the input size. `samples` must come out
    /// integral and divisible by `pool1 * pool2` (16).
    pub fn build(channels: usize, window_seconds: f64, sampling_rate: u32) -> Result<Self> {
        if channels == 0 {
            return Err(ModelError::InvalidConfig("channel count must be positive".into()));
        }
        if !(window_seconds > 0.0) || !window_seconds.is_finite() {
            return Err(ModelError::InvalidConfig(format!(
                "window length must be positive, got {window_seconds}"
            )));
        }
        if sampling_rate == 0 || !sampling_rate.is_multiple_of(8) {
            return Err(ModelError::InvalidConfig(format!(
                "sampling rate {sampling_rate} Hz must be a positive multiple of 8 (kernels are fs/2 and fs/8)"
            )));
        }
        let exact = window_seconds * sampling_rate as f64;
        let samples = exact.round();
        if (exact - samples).abs() > 1e-9 || samples < 1.0 {
            return Err(ModelError::InvalidConfig(format!(
                "window {window_seconds} s at {sampling_rate} Hz is {exact} samples, not an integer"
            )));
        }
        let config = Self {
            channels,
            window_seconds,
            sampling_rate,
            temporal_filters: 8,
            depth_multiplier: 2,
            pointwise_filters: 16,
            pool1: 4,
            pool2: 4,
            num_classes: 4,
            temporal_kernel: sampling_rate as usize / 2,
            separable_kernel: sampling_rate as usize / 8,
            samples: samples as usize,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let divisor = self.pool1 * self.pool2;
        if divisor == 0 || self.samples == 0 || !self.samples.is_multiple_of(divisor) {
            return Err(ModelError::InvalidConfig(format!(
                "{} samples must be a positive multiple of {divisor} (pool {} x {})",
                self.samples, self.pool1, self.pool2
            )));
        }
        if self.temporal_filters == 0
            || self.depth_multiplier == 0
            || self.pointwise_filters == 0
            || self.num_classes == 0
            || self.temporal_kernel == 0
            || self.separable_kernel == 0
            || self.channels == 0
        {
            return Err(ModelError::InvalidConfig(format!("zero-sized layer in {self:?}")));
        }
        Ok(())
    }

    /// Maps after the spatial (depthwise) convolution, F1·D.
    pub fn spatial_filters(&self) -> usize {
        self.temporal_filters * self.depth_multiplier
    }

    pub fn pooled1_len(&self) -> usize {
        self.samples / self.pool1
    }

    pub fn pooled2_len(&self) -> usize {
        self.samples / (self.pool1 * self.pool2)
    }

    /// Flattened backbone output, F2 · T / (pool1 · pool2).
    pub fn feature_dim(&self) -> usize {
        self.pointwise_filters * self.pooled2_len()
    }

    /// Preset this config corresponds to, if any.
    pub fn id(&self) -> Option<ConfigId> {
        ConfigId::ALL.into_iter().find(|id| &id.config() == self)
    }

    pub fn describe(&self) -> String {
        format!(
            "{} ch x {} samples ({} s @ {} Hz)",
            self.channels, self.samples, self.window_seconds, self.sampling_rate
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_shapes() {
        let c = ModelConfig::build(64, 3.0, 160).unwrap();
        assert_eq!((c.samples, c.feature_dim()), (480, 480));
        assert_eq!((c.temporal_kernel, c.separable_kernel), (80, 20));
        assert_eq!(c.spatial_filters(), 16);
        let c = ModelConfig::build(19, 2.0, 160).unwrap();
        assert_eq!((c.samples, c.feature_dim()), (320, 320));
        let c = ModelConfig::build(8, 1.0, 160).unwrap();
        assert_eq!((c.samples, c.feature_dim()), (160, 160));
        assert_eq!(c.id(), Some(ConfigId::CTwo));
    }

    #[test]
    fn rejects_indivisible_windows() {
        // 0.5 s -> 80 samples, divisible by 16; 0.55 s -> 88, not divisible
        assert!(ModelConfig::build(8, 0.5, 160).is_ok());
        let err = ModelConfig::build(8, 0.55, 160).unwrap_err().to_string();
        assert!(err.contains("16"), "{err}");
        assert!(ModelConfig::build(8, 1.0 / 3.0, 160).is_err());
        assert!(ModelConfig::build(0, 1.0, 160).is_err());
        assert!(ModelConfig::build(8, -1.0, 160).is_err());
        assert!(ModelConfig::build(8, 1.0, 100).is_err());
    }

    #[test]
    fn config_id_parsing() {
        for id in ConfigId::ALL {
            assert_eq!(id.as_str().parse::<ConfigId>().unwrap(), id);
        }
        assert!("c3".parse::<ConfigId>().is_err());
    }
}

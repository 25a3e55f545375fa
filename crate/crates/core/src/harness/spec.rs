use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Averaging, HarnessError, Result};
use crate::model::{self, ConfigId, ModelWeights};
use crate::online::OnlineHyperparams;

/// Everything an experiment run depends on. Loadable from JSON or TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub config: ConfigId,
    /// Backbone container for online and bench runs.
    #[serde(default)]
    pub container: Option<PathBuf>,
    /// One container per LOUO fold, fold order.
    #[serde(default)]
    pub louo_containers: Vec<PathBuf>,
    /// One container per LOSO fold, fold order.
    #[serde(default)]
    pub loso_containers: Vec<PathBuf>,
    #[serde(default)]
    pub store: Option<PathBuf>,
    /// Precomputed split plan; generated from `seed` when absent.
    #[serde(default)]
    pub split_plan: Option<PathBuf>,
    #[serde(default)]
    pub online: OnlineHyperparams,
    #[serde(default = "default_rate")]
    pub online_rate: f64,
    #[serde(default = "default_reps")]
    pub bench_reps: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub seed: u64,
    #[serde(default)]
    pub averaging: Averaging,
    /// Subjects (lowest ids first) reserved for offline training.
    #[serde(default = "default_offline")]
    pub offline_subjects: usize,
}

fn default_rate() -> f64 {
    0.5
}

fn default_reps() -> usize {
    100
}

fn default_offline() -> usize {
    15
}

impl ExperimentSpec {
    pub fn new(config: ConfigId, seed: u64) -> Self {
        Self {
            config,
            container: None,
            louo_containers: Vec::new(),
            loso_containers: Vec::new(),
            store: None,
            split_plan: None,
            online: OnlineHyperparams::default(),
            online_rate: default_rate(),
            bench_reps: default_reps(),
            output: None,
            seed,
            averaging: Averaging::Subject,
            offline_subjects: default_offline(),
        }
    }

    /// Parse by extension: `.toml` as TOML, anything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let spec: Self = if is_toml {
            toml::from_str(&text).map_err(|e| HarnessError::Spec(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| HarnessError::Spec(format!("{}: {e}", path.display())))?
        };
        spec.online.validate()?;
        Ok(spec)
    }

    /// Load a container and check it was built for this spec's config.
    pub fn load_container(&self, path: &Path) -> Result<ModelWeights> {
        Ok(model::load_weights_for(path, &self.config.config())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_toml_agree() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("s.json");
        let t = dir.path().join("s.toml");
        std::fs::write(&j, r#"{"config":"C_One","seed":7,"bench_reps":200}"#).unwrap();
        std::fs::write(&t, "config = \"C_One\"\nseed = 7\nbench_reps = 200\n").unwrap();
        let a = ExperimentSpec::load(&j).unwrap();
        assert_eq!(a, ExperimentSpec::load(&t).unwrap());
        assert_eq!(a.online, OnlineHyperparams::default());
        assert_eq!(a.offline_subjects, 15);
        std::fs::write(&j, r#"{"config":"C_One","seed":7,"typo":1}"#).unwrap();
        assert!(ExperimentSpec::load(&j).is_err());
    }

    #[test]
    fn container_config_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.edaw");
        let c = ConfigId::Baseline.config();
        model::save_weights(&ModelWeights::random(&c, 1), &c, &p).unwrap();
        let spec = ExperimentSpec::new(ConfigId::COne, 1);
        assert!(matches!(
            spec.load_container(&p),
            Err(HarnessError::Model(model::ModelError::ConfigMismatch { .. }))
        ));
        assert!(ExperimentSpec::new(ConfigId::Baseline, 1).load_container(&p).is_ok());
    }
}

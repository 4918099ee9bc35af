//! TOML run configuration: training hyper-parameters at the top level,
//! plus an optional dataset path and an optional `[experiment]` section
//! for nested cross-validation runs. Every field round-trips through
//! the echo file written next to training outputs, so a run's exact
//! configuration is always recorded.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Number of cross-validation folds (p).
    pub folds: usize,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))?;
        cfg.train.validate()?;
        if let Some(exp) = &cfg.experiment {
            if exp.folds < 2 {
                return Err(Error::Config(format!(
                    "experiment needs at least 2 folds, got {}",
                    exp.folds
                )));
            }
            if exp.repetitions == 0 {
                return Err(Error::Config("experiment repetitions must be at least 1".into()));
            }
        }
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self)
            .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMode;
    use crate::params::Variant;

    #[test]
    fn defaults_cover_missing_fields() {
        let cfg: RunConfig = toml::from_str("lr = 0.01\nvariant = \"na\"\n").unwrap();
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.train.variant, Variant::Na);
        assert_eq!(cfg.train.batch_size, 100);
        assert_eq!(cfg.train.dropout, 0.2);
        assert!(cfg.experiment.is_none());
    }

    #[test]
    fn round_trip_with_experiment_section() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        let cfg = RunConfig {
            train: TrainConfig {
                epochs: 7,
                features: FeatureMode::Dynamic,
                ..TrainConfig::default()
            },
            dataset: Some(PathBuf::from("data/synth")),
            experiment: Some(ExperimentConfig {
                folds: 3,
                repetitions: 2,
            }),
        };
        cfg.save(&path).unwrap();
        let back = RunConfig::load(&path).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "lr = -1.0\n").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(Error::Config(_))));
        std::fs::write(&path, "variant = \"bogus\"\n").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(Error::Config(_))));
    }
}

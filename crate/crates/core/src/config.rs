//! Experiment configuration file (TOML sections of flat key-value pairs).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::environment::{Environment, RealizerProfile, UserSimTable};
use crate::error::{Error, Result};
use crate::learning::TrainConfig;
use crate::policy::POLICY_NAMES;
use crate::reward::RewardModel;
use crate::rng;

pub const SEED_ENV_VAR: &str = "INFOPRES_SEED";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentConfig {
    pub user_sim: UserSimTable,
    pub realizer: RealizerProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub episodes: usize,
    pub alpha: f64,
    pub policies: Vec<String>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            episodes: 200,
            alpha: 0.05,
            policies: POLICY_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from(".") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed; every random stream of a run is derived from it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub environment: EnvironmentConfig,
    pub reward: RewardModel,
    pub training: TrainConfig,
    pub evaluation: EvaluationConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.environment()?;
        self.reward.validate()?;
        self.training.validate()?;
        if self.evaluation.episodes == 0 {
            return Err(Error::InvalidConfig("evaluation.episodes must be at least 1".into()));
        }
        if !(self.evaluation.alpha > 0.0 && self.evaluation.alpha < 1.0) {
            return Err(Error::InvalidConfig("evaluation.alpha must lie in (0, 1)".into()));
        }
        if self.seed.is_some_and(|s| s > i64::MAX as u64) {
            return Err(Error::InvalidConfig("seed must fit in a signed 64-bit integer".into()));
        }
        Ok(())
    }

    pub fn environment(&self) -> Result<Environment> {
        Environment::new(self.environment.realizer.clone(), self.environment.user_sim.clone())
    }

    /// Master seed: explicit value, else the config file, else `INFOPRES_SEED`, else 0.
    pub fn master_seed(&self, explicit: Option<u64>) -> Result<u64> {
        if let Some(s) = explicit.or(self.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV_VAR) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{SEED_ENV_VAR}=`{v}` is not an unsigned integer"))),
            Err(_) => Ok(0),
        }
    }

    /// Training settings with the seed derived from the master seed.
    pub fn train_config(&self, master_seed: u64) -> TrainConfig {
        TrainConfig { seed: rng::derive_seed(master_seed, "train"), ..self.training.clone() }
    }

    /// Short SHA-256 digest of the canonical serialized configuration.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(hex::encode(&digest[..8]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::parse("seed = 5\n[training]\nepisodes = 100\n").unwrap();
        assert_eq!(cfg.seed, Some(5));
        assert_eq!(cfg.training.episodes, 100);
        assert_eq!(cfg.training.alpha, 0.05);
        assert_eq!(cfg.reward, RewardModel::default());
    }

    #[test]
    fn unknown_keys_report_location() {
        let err = ExperimentConfig::parse("[training]\nepisodes = 10\nlearning_rate = 0.1\n").unwrap_err().to_string();
        assert!(err.contains("learning_rate"), "{err}");
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::parse("[training]\nalpha = 2.0\n").is_err());
        assert!(ExperimentConfig::parse("[reward]\nscale = 0.0\n").is_err());
        assert!(ExperimentConfig::parse("[environment.realizer.summary]\nattrs = []\nsentences = 2\n").is_err());
    }

    #[test]
    fn custom_rows_parse() {
        let text = "[environment.user_sim.overload]\nsys_goal = 5.0\nuser_else = 5.0\nuser_quit = 90.0\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.environment.user_sim.overload.user_quit, 90.0);
        assert_eq!(cfg.environment.user_sim.concise.user_else, 60.0);
    }

    #[test]
    fn explicit_seed_wins() {
        let cfg = ExperimentConfig { seed: Some(3), ..Default::default() };
        assert_eq!(cfg.master_seed(Some(9)).unwrap(), 9);
        assert_eq!(cfg.master_seed(None).unwrap(), 3);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.training.episodes = 10;
        assert_eq!(a.hash().unwrap(), a.hash().unwrap());
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }
}

//! Run configuration: a TOML file with flat dotted keys such as
//! `gan.epochs = 100`, plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::MaskSetting;
use crate::eval::{AttackGroup, ExperimentConfig};
use crate::gan::TrainConfig;
use crate::ids::{Algorithm, IdsHyperparams};
use crate::numcore::RNG_ALGORITHM;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config value: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    /// Unseen categorical tokens encode to 1.0 instead of failing.
    pub clamp_unseen: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: PathBuf::from("data/KDDTrain+.txt"),
            test: PathBuf::from("data/KDDTest+.txt"),
            clamp_unseen: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub ids: Vec<String>,
    pub attacks: Vec<String>,
    pub settings: Vec<String>,
    pub jobs: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            ids: Algorithm::ALL
                .iter()
                .map(|a| a.as_str().to_ascii_lowercase())
                .collect(),
            attacks: vec!["dos".into(), "u2r_r2l".into()],
            settings: vec!["functional_only".into(), "ablation".into()],
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub rng: String,
    pub out: PathBuf,
    pub data: DataConfig,
    pub grid: GridConfig,
    pub ids: IdsHyperparams,
    pub gan: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            rng: RNG_ALGORITHM.to_string(),
            out: PathBuf::from("out"),
            data: DataConfig::default(),
            grid: GridConfig::default(),
            ids: IdsHyperparams::default(),
            gan: TrainConfig::default(),
        }
    }
}

pub fn parse_list<T>(
    items: &[String],
    what: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Vec<T>, ConfigError> {
    items
        .iter()
        .map(|s| parse(s).ok_or_else(|| ConfigError::Invalid(format!("unknown {what} `{s}`"))))
        .collect()
}

impl RunConfig {
    pub fn from_toml(text: &str, source: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: source.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<ExperimentConfig, ConfigError> {
        if self.rng != RNG_ALGORITHM {
            return Err(ConfigError::Invalid(format!(
                "rng must be `{RNG_ALGORITHM}`, got `{}`",
                self.rng
            )));
        }
        self.gan
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let algorithms = parse_list(&self.grid.ids, "IDS algorithm", |s| {
            Algorithm::parse(s).ok()
        })?;
        let attacks = parse_list(&self.grid.attacks, "attack group", AttackGroup::parse)?;
        let settings = parse_list(&self.grid.settings, "setting", MaskSetting::parse)?;
        if algorithms.is_empty() || attacks.is_empty() || settings.is_empty() {
            return Err(ConfigError::Invalid(
                "grid.ids, grid.attacks and grid.settings must be non-empty".into(),
            ));
        }
        if self.grid.jobs == 0 {
            return Err(ConfigError::Invalid("grid.jobs must be at least 1".into()));
        }
        Ok(ExperimentConfig {
            seed: self.seed,
            algorithms,
            attacks,
            settings,
            ids: self.ids.clone(),
            gan: self.gan.clone(),
            jobs: self.grid.jobs,
        })
    }

    /// Every setting as `dotted.key = value`, sorted by key.
    pub fn to_flat_toml(&self) -> String {
        let value = toml::Value::try_from(self).expect("config serializes");
        let mut lines = Vec::new();
        flatten("", &value, &mut lines);
        lines.sort();
        let mut out = String::from("# effective configuration\n");
        for (k, v) in lines {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        v => out.push((prefix.to_string(), v.to_string())),
    }
}

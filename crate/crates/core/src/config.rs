//! Run configuration: one TOML file, every field defaulted, unknown keys
//! rejected. Command-line overrides are applied on top with [`RunConfig::set`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Scenario};
use crate::error::{Error, Result};
use crate::fusion::FuseOptions;
use crate::grid::{load_case, CaseId, CaseSource, PowerNetwork};
use crate::responder::ResponderConfig;
use crate::rid::RidOptions;
use crate::rl::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeConfig {
    pub addr: String,
    /// Delay between replayed steps, ms.
    pub replay_step_ms: u64,
    pub checkpoint: Option<PathBuf>,
    /// NDJSON feedback log; in memory when unset.
    pub feedback_log: Option<PathBuf>,
    /// Directory of episode logs served for replay.
    pub episodes_dir: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
            replay_step_ms: 1000,
            checkpoint: None,
            feedback_log: None,
            episodes_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuseRunConfig {
    /// Frames per dataset, split evenly between normal and attack.
    pub frames: usize,
    pub options: FuseOptions,
}

impl Default for FuseRunConfig {
    fn default() -> Self {
        Self { frames: 200, options: FuseOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub case: CaseId,
    /// Overrides `case` with a case file.
    pub case_file: Option<PathBuf>,
    pub scenario: Scenario,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Freeze RID-redundant devices during training and evaluation.
    pub use_rid: bool,
    pub eval_episodes: usize,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub rid: RidOptions,
    pub fuse: FuseRunConfig,
    pub responder: ResponderConfig,
    pub serve: ServeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: CaseId::Wscc9Augmented,
            case_file: None,
            scenario: Scenario::Normal,
            seed: 0,
            output_dir: PathBuf::from("runs"),
            use_rid: false,
            eval_episodes: 10,
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            rid: RidOptions::default(),
            fuse: FuseRunConfig::default(),
            responder: ResponderConfig::default(),
            serve: ServeConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults, overlaid by `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml_str(&text).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Sets a dotted key such as `train.ppo.learning_rate` from a TOML
    /// literal; bare words are taken as strings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut root = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
            Ok(mut t) => t.remove("v").expect("key present"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node.as_table_mut().ok_or_else(|| Error::Config(format!("`{key}`: `{part}` is not a table")))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), parsed.clone());
                break;
            }
            node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        let next: RunConfig = root.try_into().map_err(|e: toml::de::Error| Error::Config(format!("`{key}`: {e}")))?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate().map_err(|e| Error::Config(format!("env: {e}")))?;
        self.train.validate().map_err(|e| Error::Config(format!("train: {e}")))?;
        if self.fuse.frames < 4 {
            return Err(Error::Config("fuse.frames: at least 4 frames needed".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes: must be positive".into()));
        }
        Ok(())
    }

    pub fn network(&self) -> Result<PowerNetwork> {
        match &self.case_file {
            Some(p) => load_case(CaseSource::File(p)),
            None => load_case(CaseSource::Builtin(self.case)),
        }
    }
}

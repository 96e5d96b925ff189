//! Run configuration: a TOML file plus command-line overrides.
//!
//! ```toml
//! subtask = "A"
//! seed = 42
//! output_dir = "runs/subtask-a"
//!
//! [data]
//! train = "data/train.jsonl"      # or: corpus = "data/all.jsonl" with split = [0.7, 0.1, 0.2]
//!
//! [encoders]                      # "reference" or "cache:<path>"
//! english = "cache:emb/english.cmqe"
//! hindi = "cache:emb/hindi.cmqe"
//! hinglish = "reference"
//!
//! [dims]                          # reference encoder dimension per channel
//! hinglish = 768
//!
//! [train]
//! iterations = 200
//! learning_rate = 0.1
//! max_depth = 4
//! min_samples_leaf = 5
//! l2_leaf_reg = 1.0
//! ```
//!
//! Relative paths in the file resolve against the file's directory.
//! Environment variables are never consulted.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cmqe_core::corpus::{Channel, Subtask};
use cmqe_core::gbdt::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum EncoderSpec {
    Reference,
    Cache(PathBuf),
}

impl FromStr for EncoderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "reference" => Ok(EncoderSpec::Reference),
            other => match other.strip_prefix("cache:") {
                Some(p) if !p.is_empty() => Ok(EncoderSpec::Cache(PathBuf::from(p))),
                _ => Err(format!(
                    "encoder `{other}` must be `reference` or `cache:<path>`"
                )),
            },
        }
    }
}

impl TryFrom<String> for EncoderSpec {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<EncoderSpec> for String {
    fn from(e: EncoderSpec) -> String {
        e.to_string()
    }
}

impl fmt::Display for EncoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderSpec::Reference => f.write_str("reference"),
            EncoderSpec::Cache(p) => write!(f, "cache:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerChannel<T> {
    pub english: Option<T>,
    pub hindi: Option<T>,
    pub hinglish: Option<T>,
}

impl<T> Default for PerChannel<T> {
    fn default() -> Self {
        PerChannel {
            english: None,
            hindi: None,
            hinglish: None,
        }
    }
}

impl<T> PerChannel<T> {
    pub fn get(&self, c: Channel) -> Option<&T> {
        match c {
            Channel::English => self.english.as_ref(),
            Channel::Hindi => self.hindi.as_ref(),
            Channel::Hinglish => self.hinglish.as_ref(),
        }
    }

    pub fn set(&mut self, c: Channel, v: T) {
        match c {
            Channel::English => self.english = Some(v),
            Channel::Hindi => self.hindi = Some(v),
            Channel::Hinglish => self.hinglish = Some(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub split: Option<[f64; 3]>,
}

/// As read from disk; every field optional so flags can fill the gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub subtask: Option<String>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub encoders: PerChannel<EncoderSpec>,
    #[serde(default)]
    pub dims: PerChannel<usize>,
    pub train: Option<TrainSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub l2_leaf_reg: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ConfigFile = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut cfg.data.train,
            &mut cfg.data.corpus,
            &mut cfg.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        for spec in [
            &mut cfg.encoders.english,
            &mut cfg.encoders.hindi,
            &mut cfg.encoders.hinglish,
        ]
        .into_iter()
        .flatten()
        {
            if let EncoderSpec::Cache(p) = spec {
                rebase(p);
            }
        }
        Ok(cfg)
    }
}

/// Embedding source for all three channels, resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSettings {
    pub english: ChannelSetting,
    pub hindi: ChannelSetting,
    pub hinglish: ChannelSetting,
    /// Seeds the reference encoder.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSetting {
    pub encoder: EncoderSpec,
    /// Reference encoder dimension; cache-backed channels take the cache's.
    pub dim: usize,
}

impl EncoderSettings {
    pub fn get(&self, c: Channel) -> &ChannelSetting {
        match c {
            Channel::English => &self.english,
            Channel::Hindi => &self.hindi,
            Channel::Hinglish => &self.hinglish,
        }
    }

    pub fn resolve(
        file: &ConfigFile,
        encoder_flags: &[(Channel, EncoderSpec)],
        dim_flag: Option<usize>,
        default_dims: [usize; 3],
        seed: u64,
    ) -> Result<Self> {
        let mut encoders = file.encoders.clone();
        for (c, e) in encoder_flags {
            encoders.set(*c, e.clone());
        }
        let setting = |c: Channel, default_dim: usize| -> Result<ChannelSetting> {
            let encoder = encoders.get(c).cloned().unwrap_or(EncoderSpec::Reference);
            if let EncoderSpec::Cache(p) = &encoder {
                if !p.is_file() {
                    return Err(CliError::Usage(format!(
                        "{c} cache {} does not exist",
                        p.display()
                    )));
                }
            }
            let dim = dim_flag
                .or(file.dims.get(c).copied())
                .unwrap_or(default_dim);
            if dim < cmqe_core::embedding::reference::MIN_DIM {
                return Err(CliError::Usage(format!("{c} dim {dim} is below 8")));
            }
            Ok(ChannelSetting { encoder, dim })
        };
        Ok(EncoderSettings {
            english: setting(Channel::English, default_dims[0])?,
            hindi: setting(Channel::Hindi, default_dims[1])?,
            hinglish: setting(Channel::Hinglish, default_dims[2])?,
            seed,
        })
    }
}

/// Fully resolved settings for `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subtask: Subtask,
    pub seed: u64,
    pub corpus: PathBuf,
    /// Set when training on the train part of a single corpus.
    pub split: Option<[f64; 3]>,
    pub encoders: EncoderSettings,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
}

pub fn parse_subtask(s: &str) -> Result<Subtask> {
    s.parse().map_err(CliError::Usage)
}

pub fn train_config(section: Option<TrainSection>, seed: u64) -> TrainConfig {
    let d = TrainConfig::default();
    let s = section.unwrap_or_default();
    TrainConfig {
        iterations: s.iterations.unwrap_or(d.iterations),
        learning_rate: s.learning_rate.unwrap_or(d.learning_rate),
        max_depth: s.max_depth.unwrap_or(d.max_depth),
        min_samples_leaf: s.min_samples_leaf.unwrap_or(d.min_samples_leaf),
        l2_leaf_reg: s.l2_leaf_reg.unwrap_or(d.l2_leaf_reg),
        seed,
    }
}

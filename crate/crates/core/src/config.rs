//! Versioned TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//! seeds = [1, 2, 3, 4, 5]
//!
//! [synth]                 # used by `safer synth`
//! preset = "gossipcop-like"
//! users = 3000            # any SynthConfig field overrides the preset
//!
//! [build]
//! vocab_size = 2000
//!
//! [encoder]
//! kind = "gcn"            # remaining fields override the per-kind defaults
//! hidden = 64
//!
//! [train]                 # overrides the per-kind learning rate / weight decay
//! max_epochs = 60
//!
//! [text.model]
//! filters = 32
//!
//! [lr]
//! l2 = 0.01
//!
//! [ablation]
//! thresholds = [0.10, 0.05, 0.01]
//! encoders = ["gcn", "rgcn", "hygcn"]
//!
//! [sweep]
//! fractions = [0.2, 0.4, 0.6, 0.8, 1.0]
//! ```
//!
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::builder::synth::SynthConfig;
use crate::builder::BuildConfig;
use crate::error::{Error, Result};
use crate::gnn::{EncoderConfig, EncoderKind};
use crate::pipeline::lr::LrConfig;
use crate::pipeline::train::TrainConfig;
use crate::text::{CnnTextConfig, TextTrainConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextSection {
    pub model: CnnTextConfig,
    pub train: TextTrainConfig,
    /// Precomputed document embeddings used instead of the CNN.
    pub embeddings: Option<PathBuf>,
}

impl Default for TextSection {
    fn default() -> Self {
        Self {
            model: CnnTextConfig {
                embed_dim: 32,
                filters: 32,
                ..CnnTextConfig::default()
            },
            train: TextTrainConfig {
                lr: 2e-3,
                ..TextTrainConfig::default()
            },
            embeddings: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Baselines {
    pub social: bool,
    pub text: bool,
    pub majority: bool,
}

impl Default for Baselines {
    fn default() -> Self {
        Self {
            social: true,
            text: true,
            majority: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub thresholds: Vec<f64>,
    pub encoders: Vec<EncoderKind>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![0.10, 0.05, 0.01],
            encoders: vec![EncoderKind::Rgcn, EncoderKind::Rgat, EncoderKind::Hygcn, EncoderKind::Hygat],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub fractions: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            fractions: vec![0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }
}

/// Fully resolved run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seeds: Vec<u64>,
    pub preset: String,
    pub synth: SynthConfig,
    pub build: BuildConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub text: TextSection,
    pub lr: LrConfig,
    pub baselines: Baselines,
    pub ablation: AblationConfig,
    pub sweep: SweepConfig,
    /// User-supplied `[encoder]` and `[train]` keys, re-applied for other kinds.
    encoder_overrides: toml::Table,
    train_overrides: toml::Table,
    synth_overrides: toml::Table,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_toml_str("schema_version = 1").expect("default config is valid")
    }
}

fn config_err(section: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("[{section}]: {e}"))
}

fn overlay<T: Serialize + DeserializeOwned>(base: &T, over: &toml::Table, section: &str) -> Result<T> {
    let mut v = toml::Value::try_from(base).map_err(|e| config_err(section, e))?;
    let table = v.as_table_mut().expect("config sections serialise to tables");
    for (k, val) in over {
        table.insert(k.clone(), val.clone());
    }
    v.try_into().map_err(|e| config_err(section, e))
}

fn section<T: DeserializeOwned + Default>(root: &mut toml::Table, name: &str) -> Result<T> {
    match root.remove(name) {
        None => Ok(T::default()),
        Some(v) => v.try_into().map_err(|e| config_err(name, e)),
    }
}

fn take_table(root: &mut toml::Table, name: &str) -> Result<toml::Table> {
    match root.remove(name) {
        None => Ok(toml::Table::new()),
        Some(toml::Value::Table(t)) => Ok(t),
        Some(_) => Err(Error::Config(format!("[{name}] must be a table"))),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut root: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let version = match root.remove("schema_version") {
            Some(toml::Value::Integer(v)) => v,
            Some(_) => return Err(Error::Config("schema_version must be an integer".into())),
            None => return Err(Error::Config("missing schema_version".into())),
        };
        if version != i64::from(SCHEMA_VERSION) {
            return Err(Error::Config(format!(
                "unsupported schema_version {version} (expected {SCHEMA_VERSION})"
            )));
        }
        let seeds: Vec<u64> = match root.remove("seeds") {
            None => vec![1, 2, 3, 4, 5],
            Some(v) => v.try_into().map_err(|e| config_err("seeds", e))?,
        };
        let mut synth_overrides = take_table(&mut root, "synth")?;
        let preset = match synth_overrides.remove("preset") {
            None => "gossipcop-like".to_string(),
            Some(toml::Value::String(s)) => s,
            Some(_) => return Err(Error::Config("[synth] preset must be a string".into())),
        };
        let mut encoder_overrides = take_table(&mut root, "encoder")?;
        let kind: EncoderKind = match encoder_overrides.remove("kind") {
            None => EncoderKind::Gcn,
            Some(toml::Value::String(s)) => s.parse()?,
            Some(_) => return Err(Error::Config("[encoder] kind must be a string".into())),
        };
        let train_overrides = take_table(&mut root, "train")?;
        let build = section(&mut root, "build")?;
        let text = section(&mut root, "text")?;
        let lr = section(&mut root, "lr")?;
        let baselines = section(&mut root, "baselines")?;
        let ablation = section(&mut root, "ablation")?;
        let sweep = section(&mut root, "sweep")?;
        if let Some(k) = root.keys().next() {
            return Err(Error::Config(format!("unknown key {k:?}")));
        }
        let mut cfg = RunConfig {
            schema_version: SCHEMA_VERSION,
            seeds,
            synth: SynthConfig::default(),
            preset: String::new(),
            build,
            encoder: EncoderConfig::for_kind(kind),
            train: TrainConfig::for_kind(kind),
            text,
            lr,
            baselines,
            ablation,
            sweep,
            encoder_overrides,
            train_overrides,
            synth_overrides,
        };
        cfg.set_preset(&preset)?;
        cfg.set_kind(kind)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Switches the synthetic preset, keeping user overrides.
    pub fn set_preset(&mut self, preset: &str) -> Result<()> {
        self.synth = overlay(&SynthConfig::preset(preset)?, &self.synth_overrides, "synth")?;
        self.preset = preset.to_string();
        Ok(())
    }

    /// Switches the primary encoder, keeping user overrides.
    pub fn set_kind(&mut self, kind: EncoderKind) -> Result<()> {
        self.encoder = self.encoder_for(kind)?;
        self.train = self.train_for(kind)?;
        Ok(())
    }

    /// Per-kind defaults with the user's `[encoder]` keys applied.
    pub fn encoder_for(&self, kind: EncoderKind) -> Result<EncoderConfig> {
        let c: EncoderConfig = overlay(&EncoderConfig::for_kind(kind), &self.encoder_overrides, "encoder")?;
        c.validate()?;
        Ok(c)
    }

    /// Per-kind defaults with the user's `[train]` keys applied.
    pub fn train_for(&self, kind: EncoderKind) -> Result<TrainConfig> {
        let c: TrainConfig = overlay(&TrainConfig::for_kind(kind), &self.train_overrides, "train")?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        self.build.validate()?;
        self.text.model.validate()?;
        self.synth.validate().map_err(|e| Error::Config(format!("[synth]: {e}")))?;
        if self.ablation.thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::Config("ablation thresholds must lie in (0, 1]".into()));
        }
        if self.sweep.fractions.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::Config("sweep fractions must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// JSON with sorted keys; identical for configs that differ only in key order.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&serde_json::to_value(self).expect("config serialises")).expect("value serialises")
    }
}

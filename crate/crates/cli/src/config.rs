//! Flat JSON run configuration with command-line overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sirm_core::eval::NbowConfig;
use sirm_core::model::SirmConfig;
use sirm_core::text::{DEFAULT_MAX_SIZE, DEFAULT_MIN_FREQUENCY};
use sirm_core::train::{SelectionMetric, TrainConfig};
use sirm_core::Error;

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "SIRM_SEED";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Sirm,
    Nbow,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    /// 64-bit arithmetic; checkpoints are still stored as f32.
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    MacroF1,
    F1,
}

/// Keys of the config file that are not model or optimizer fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub model: ModelKind,
    pub precision: Precision,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub min_freq: u64,
    pub max_size: usize,
    /// Share of the training file held out when no dev file is given.
    pub dev_fraction: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            model: ModelKind::Sirm,
            precision: Precision::F32,
            train: None,
            dev: None,
            vocab: None,
            out_dir: None,
            min_freq: DEFAULT_MIN_FREQUENCY,
            max_size: DEFAULT_MAX_SIZE,
            dev_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: SirmConfig,
    pub train: TrainConfig,
    pub run: RunSettings,
}

impl RunConfig {
    pub fn nbow(&self) -> NbowConfig {
        NbowConfig {
            d_e: self.model.d_e,
            m: self.model.m,
            n: self.model.n,
            vocab_size: self.model.vocab_size,
        }
    }
}

/// Model and optimizer flags. Unset flags keep the config-file value, which
/// in turn falls back to the built-in defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct ConfigOverrides {
    /// Word embedding width (default 64)
    #[arg(long)]
    pub d_e: Option<usize>,
    /// Filters per skim window (default 16)
    #[arg(long)]
    pub d_c: Option<usize>,
    /// Skim window sizes, comma separated (default 1,2,3,4)
    #[arg(long, value_delimiter = ',')]
    pub windows: Option<Vec<usize>>,
    /// Near-neighbor half width; windows are 2k+1 (default 1)
    #[arg(long)]
    pub k: Option<usize>,
    /// Sentence-level near-neighbor filters (default 64)
    #[arg(long)]
    pub d_ns: Option<usize>,
    /// Paragraph-level near-neighbor filters (default 64)
    #[arg(long)]
    pub d_np: Option<usize>,
    /// Sentence encoding width (default 64)
    #[arg(long)]
    pub d_as: Option<usize>,
    /// Paragraph encoding width (default 64)
    #[arg(long)]
    pub d_ap: Option<usize>,
    /// Adversarial gradient reversal scale; 0 disables it (default 1e-6)
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Sentences per paragraph (default 8)
    #[arg(long)]
    pub m: Option<usize>,
    /// Words per sentence (default 32)
    #[arg(long)]
    pub n: Option<usize>,
    /// Average intensive-reading rows over real tokens only
    #[arg(long)]
    pub mask_aware: bool,
    /// Adam learning rate (default 1e-3)
    #[arg(long)]
    pub lr: Option<f64>,
    /// Examples per batch (default 64)
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Epoch limit (default 50)
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Adam first-moment decay (default 0.9)
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Adam second-moment decay (default 0.999)
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Adam epsilon (default 1e-8)
    #[arg(long)]
    pub adam_eps: Option<f64>,
    /// Random seed; overrides SIRM_SEED and the config file (default 42)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epochs without dev improvement before stopping (default 5)
    #[arg(long)]
    pub patience: Option<usize>,
    /// Keep file order instead of reshuffling every epoch
    #[arg(long)]
    pub no_shuffle: bool,
    /// Clip the batch gradient to this global L2 norm (default off)
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Dev metric used to keep the best epoch (default macro-f1)
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    /// Model to train (default sirm)
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Arithmetic precision (default f32)
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
    /// Minimum training frequency for a vocabulary entry (default 2)
    #[arg(long)]
    pub min_freq: Option<u64>,
    /// Vocabulary size including PAD and UNK (default 30000)
    #[arg(long)]
    pub max_size: Option<usize>,
    /// Share of training data held out as dev when --dev is absent (default 0.1)
    #[arg(long)]
    pub dev_fraction: Option<f64>,
}

impl ConfigOverrides {
    fn pairs(&self) -> Vec<(&'static str, Value)> {
        let mut out = Vec::new();
        let mut put = |key: &'static str, v: Option<Value>| {
            if let Some(v) = v {
                out.push((key, v));
            }
        };
        put("d_e", self.d_e.map(Value::from));
        put("d_c", self.d_c.map(Value::from));
        put("src_windows", self.windows.clone().map(Value::from));
        put("k", self.k.map(Value::from));
        put("d_ns", self.d_ns.map(Value::from));
        put("d_np", self.d_np.map(Value::from));
        put("d_as", self.d_as.map(Value::from));
        put("d_ap", self.d_ap.map(Value::from));
        put("lambda", self.lambda.map(Value::from));
        put("m", self.m.map(Value::from));
        put("n", self.n.map(Value::from));
        put(
            "mask_aware_pooling",
            self.mask_aware.then_some(Value::Bool(true)),
        );
        put("learning_rate", self.lr.map(Value::from));
        put("batch_size", self.batch_size.map(Value::from));
        put("max_epochs", self.max_epochs.map(Value::from));
        put("adam_beta1", self.beta1.map(Value::from));
        put("adam_beta2", self.beta2.map(Value::from));
        put("adam_eps", self.adam_eps.map(Value::from));
        put("seed", self.seed.map(Value::from));
        put("early_stop_patience", self.patience.map(Value::from));
        put("shuffle", self.no_shuffle.then_some(Value::Bool(false)));
        put("clip_norm", self.clip_norm.map(Value::from));
        put(
            "selection_metric",
            self.metric.map(|m| {
                let m = match m {
                    MetricArg::MacroF1 => SelectionMetric::MacroF1,
                    MetricArg::F1 => SelectionMetric::F1,
                };
                serde_json::to_value(m).expect("enum serializes")
            }),
        );
        put(
            "model",
            self.model
                .map(|m| serde_json::to_value(m).expect("enum serializes")),
        );
        put(
            "precision",
            self.precision
                .map(|p| serde_json::to_value(p).expect("enum serializes")),
        );
        put("min_freq", self.min_freq.map(Value::from));
        put("max_size", self.max_size.map(Value::from));
        put("dev_fraction", self.dev_fraction.map(Value::from));
        out
    }
}

fn keys_of<T: Serialize>(value: &T) -> BTreeSet<String> {
    match serde_json::to_value(value) {
        Ok(Value::Object(map)) => map.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

fn known_keys() -> BTreeSet<String> {
    let mut keys = keys_of(&SirmConfig::default());
    keys.extend(keys_of(&TrainConfig::default()));
    keys.extend(keys_of(&RunSettings::default()));
    keys
}

fn read_config_file(path: &Path) -> CliResult<Map<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(Error::Format {
            path: path.to_path_buf(),
            message: "config must be a JSON object".into(),
        }
        .into()),
        Err(e) => Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("invalid JSON: {e}"),
        }
        .into()),
    }
}

fn section<T: for<'de> Deserialize<'de>>(map: &Map<String, Value>, what: &str) -> CliResult<T> {
    serde_json::from_value(Value::Object(map.clone()))
        .map_err(|e| CliError::Core(Error::Config(format!("{what}: {e}"))))
}

/// Merges, lowest priority first: built-in defaults, the config file,
/// `SIRM_SEED`, then explicit flags. Relative paths in the file are taken
/// relative to the file.
pub fn resolve(
    file: Option<&Path>,
    overrides: &ConfigOverrides,
    env_seed: Option<&str>,
) -> CliResult<RunConfig> {
    let mut map = match file {
        Some(p) => read_config_file(p)?,
        None => Map::new(),
    };
    let known = known_keys();
    let unknown: Vec<&String> = map.keys().filter(|k| !known.contains(*k)).collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown config keys: {unknown:?}")).into());
    }
    if let Some(raw) = env_seed {
        let seed: u64 = raw
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={raw:?} is not an integer")))?;
        map.insert("seed".into(), Value::from(seed));
    }
    for (k, v) in overrides.pairs() {
        map.insert(k.to_string(), v);
    }
    let model: SirmConfig = section(&map, "model config")?;
    let train: TrainConfig = section(&map, "training config")?;
    let mut run: RunSettings = section(&map, "run settings")?;
    if let Some(base) = file.and_then(Path::parent) {
        for path in [
            &mut run.train,
            &mut run.dev,
            &mut run.vocab,
            &mut run.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
    train.validate()?;
    if !(run.dev_fraction > 0.0 && run.dev_fraction < 1.0) {
        return Err(Error::Config(format!(
            "dev_fraction must lie in (0, 1), got {}",
            run.dev_fraction
        ))
        .into());
    }
    Ok(RunConfig { model, train, run })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_env_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 1, "d_e": 8, "max_epochs": 3}"#).unwrap();
        let c = resolve(Some(&path), &ConfigOverrides::default(), Some("7")).unwrap();
        assert_eq!((c.train.seed, c.model.d_e, c.train.max_epochs), (7, 8, 3));
        let flags = ConfigOverrides {
            seed: Some(9),
            ..Default::default()
        };
        assert_eq!(
            resolve(Some(&path), &flags, Some("7")).unwrap().train.seed,
            9
        );
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"learning_rat": 0.1}"#).unwrap();
        assert!(resolve(Some(&path), &ConfigOverrides::default(), None).is_err());
    }

    #[test]
    fn defaults() {
        let c = resolve(None, &ConfigOverrides::default(), None).unwrap();
        assert_eq!(c.model, SirmConfig::default());
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.run, RunSettings::default());
    }
}

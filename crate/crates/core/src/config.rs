//! Run configuration and its flat `key=value` text form.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Padding;
use crate::error::{Error, Result};
use crate::model::{Architecture, OptimizerConfig, Schedule};
use crate::numcore::{LossConfig, SignMode};
use crate::policy::EntropySource;
use crate::transforms::DEFAULT_FILL;

/// Environment variable naming the dataset root directory.
pub const DATA_DIR_ENV: &str = "ENTAUG_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetId {
    /// IDX files under `<data_dir>/mnist`.
    Mnist,
    /// Binary batches under `<data_dir>/cifar-10-batches-bin`.
    Cifar10,
    /// Procedurally generated 28×28 digits; needs no files.
    SynthDigits,
}

impl DatasetId {
    pub fn name(self) -> &'static str {
        match self {
            DatasetId::Mnist => "mnist",
            DatasetId::Cifar10 => "cifar10",
            DatasetId::SynthDigits => "synth-digits",
        }
    }
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetId::Mnist),
            "cifar10" | "cifar-10" => Ok(DatasetId::Cifar10),
            "synth-digits" | "synth" => Ok(DatasetId::SynthDigits),
            other => Err(Error::Config(format!("unknown dataset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AugMode {
    None,
    BaselineOnly,
    RandomMagnitude,
    EntAugment,
}

impl AugMode {
    pub fn name(self) -> &'static str {
        match self {
            AugMode::None => "none",
            AugMode::BaselineOnly => "baseline_only",
            AugMode::RandomMagnitude => "random_magnitude",
            AugMode::EntAugment => "entaugment",
        }
    }
}

impl fmt::Display for AugMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AugMode::None),
            "baseline_only" | "baseline" => Ok(AugMode::BaselineOnly),
            "random_magnitude" | "random" => Ok(AugMode::RandomMagnitude),
            "entaugment" => Ok(AugMode::EntAugment),
            other => Err(Error::Config(format!("unknown augmentation mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetId,
    pub data_dir: Option<PathBuf>,
    /// Training samples used (stratified subset; synthetic sets are generated at this size).
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
    pub arch: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub loss: LossConfig,
    pub aug: AugMode,
    pub entropy_source: EntropySource,
    pub padding: Padding,
    pub fill: u8,
    pub seed: u64,
    /// Seeds dataset subsetting and synthesis, kept apart from `seed` so
    /// runs with different training seeds see the same samples.
    pub data_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub precision: Precision,
    /// Fan augmentation out over threads; results are identical either way.
    pub parallel: bool,
    pub eval_batch_size: usize,
}

impl Default for RunConfig {
    /// Desk-scale defaults: 10k MNIST samples, tiny-cnn, 20 epochs, batch 128, lr 0.05 cosine.
    fn default() -> Self {
        Self {
            dataset: DatasetId::Mnist,
            data_dir: None,
            train_size: Some(10_000),
            test_size: None,
            arch: Architecture::TinyCnn,
            epochs: 20,
            batch_size: 128,
            optimizer: OptimizerConfig {
                lr0: 0.05,
                momentum: 0.9,
                nesterov: false,
                weight_decay: 5e-4,
                schedule: Schedule::Cosine { total_epochs: 20 },
            },
            loss: LossConfig::cross_entropy_only(),
            aug: AugMode::EntAugment,
            entropy_source: EntropySource::CachedLastEpoch,
            padding: Padding::Zero,
            fill: DEFAULT_FILL,
            seed: 0,
            data_seed: 0,
            output_dir: None,
            precision: Precision::F32,
            parallel: false,
            eval_batch_size: 500,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean {value:?} for {key}"))),
    }
}

fn parse_size(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "all" || value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl RunConfig {
    /// The paper-scale hyperparameters: 300 epochs, batch 256, lr 0.1 cosine.
    pub fn paper_scale() -> Self {
        let mut cfg = Self::default();
        cfg.epochs = 300;
        cfg.batch_size = 256;
        cfg.optimizer.lr0 = 0.1;
        cfg.optimizer.schedule = Schedule::Cosine { total_epochs: 300 };
        cfg.train_size = None;
        cfg
    }

    /// Sets one field from its text form. Keys match [`RunConfig::to_kv`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "dataset" => self.dataset = value.parse()?,
            "data_dir" => self.data_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "train_size" | "subset" => self.train_size = parse_size(key, value)?,
            "test_size" => self.test_size = parse_size(key, value)?,
            "arch" => self.arch = value.parse()?,
            "epochs" => {
                self.epochs = parse(key, value)?;
                if let Schedule::Cosine { total_epochs } = &mut self.optimizer.schedule {
                    *total_epochs = self.epochs;
                }
            }
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" | "lr0" => self.optimizer.lr0 = parse(key, value)?,
            "momentum" => self.optimizer.momentum = parse(key, value)?,
            "nesterov" => self.optimizer.nesterov = parse_bool(key, value)?,
            "weight_decay" => self.optimizer.weight_decay = parse(key, value)?,
            "schedule" => self.optimizer.schedule = self.parse_schedule(value)?,
            "ent_loss" => self.loss.use_ent_loss = parse_bool(key, value)?,
            "lambda" => self.loss.lambda = parse(key, value)?,
            "sign_mode" => {
                self.loss.sign_mode = match value {
                    "entropy-minimizing" | "minimize" => SignMode::EntropyMinimizing,
                    "literal" | "literal-eq3" => SignMode::LiteralEq3,
                    other => return Err(Error::Config(format!("unknown sign mode {other:?}"))),
                }
            }
            "aug" => self.aug = value.parse()?,
            "entropy_source" => self.entropy_source = value.parse()?,
            "padding" => self.padding = value.parse()?,
            "fill" => self.fill = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "data_seed" => self.data_seed = parse(key, value)?,
            "output_dir" => self.output_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "precision" => {
                self.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    other => return Err(Error::Config(format!("unknown precision {other:?}"))),
                }
            }
            "parallel" => self.parallel = parse_bool(key, value)?,
            "eval_batch_size" => self.eval_batch_size = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// `cosine` or `multistep:60,120,160:0.2`.
    fn parse_schedule(&self, value: &str) -> Result<Schedule> {
        if value == "cosine" {
            return Ok(Schedule::Cosine { total_epochs: self.epochs });
        }
        let mut parts = value.split(':');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some("multistep"), Some(ms), Some(gamma), None) => {
                let milestones = ms
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| parse("schedule", s))
                    .collect::<Result<Vec<usize>>>()?;
                Ok(Schedule::MultiStep { milestones, gamma: parse("schedule", gamma)? })
            }
            _ => Err(Error::Config(format!("bad schedule {value:?}"))),
        }
    }

    /// Applies a `key=value` text, one pair per line; `#` starts a comment.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_kv_text(&text)?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let size = |s: Option<usize>| s.map_or("all".to_string(), |n| n.to_string());
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let schedule = match &self.optimizer.schedule {
            Schedule::Cosine { .. } => "cosine".to_string(),
            Schedule::MultiStep { milestones, gamma } => format!(
                "multistep:{}:{gamma}",
                milestones.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(",")
            ),
        };
        let pairs = [
            ("dataset", self.dataset.name().to_string()),
            ("data_dir", path(&self.data_dir)),
            ("train_size", size(self.train_size)),
            ("test_size", size(self.test_size)),
            ("arch", self.arch.name().to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.optimizer.lr0.to_string()),
            ("momentum", self.optimizer.momentum.to_string()),
            ("nesterov", self.optimizer.nesterov.to_string()),
            ("weight_decay", self.optimizer.weight_decay.to_string()),
            ("schedule", schedule),
            ("ent_loss", self.loss.use_ent_loss.to_string()),
            ("lambda", self.loss.lambda.to_string()),
            (
                "sign_mode",
                match self.loss.sign_mode {
                    SignMode::EntropyMinimizing => "entropy-minimizing",
                    SignMode::LiteralEq3 => "literal",
                }
                .to_string(),
            ),
            ("aug", self.aug.name().to_string()),
            ("entropy_source", self.entropy_source.to_string()),
            ("padding", self.padding.to_string()),
            ("fill", self.fill.to_string()),
            ("seed", self.seed.to_string()),
            ("data_seed", self.data_seed.to_string()),
            ("output_dir", path(&self.output_dir)),
            (
                "precision",
                match self.precision {
                    Precision::F32 => "f32",
                    Precision::F64 => "f64",
                }
                .to_string(),
            ),
            ("parallel", self.parallel.to_string()),
            ("eval_batch_size", self.eval_batch_size.to_string()),
        ];
        pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Checks every field before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.eval_batch_size == 0 {
            return Err(Error::Config("eval_batch_size must be at least 1".into()));
        }
        if self.train_size == Some(0) || self.test_size == Some(0) {
            return Err(Error::Config("dataset sizes must be positive".into()));
        }
        self.optimizer.validate()?;
        self.loss.validate()
    }

    /// Dataset root: `data_dir`, else `$ENTAUG_DATA_DIR`, else `./data`.
    pub fn resolved_data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }
}

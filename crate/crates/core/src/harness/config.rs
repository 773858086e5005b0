//! Experiment configuration as `key=value` text, with a stable hash.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::dataset::DatasetConfig;
use crate::error::{config_err, Error, Result};
use crate::model::{ModelConfig, OptimizerKind, Variant};
use crate::ttt::TttConfig;
use crate::tvm::Subbands;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub image_size: usize,
    pub channels: usize,
    pub rsampc_depth: usize,
    /// Channel-scaling spread; `None` disables the scaling.
    pub rsampc_eps: Option<f64>,
    pub ttt_eta: f64,
    pub ttt_mini_batch: usize,
    pub ttt_residual: bool,
    pub subbands: Subbands,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub data_seed: u64,
    pub model_seed: u64,
    pub train_count: usize,
    pub test_count: usize,
    pub delta: f64,
    pub probe_count: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::M3,
            image_size: 256,
            channels: 32,
            rsampc_depth: crate::rsampc::DEFAULT_DEPTH,
            rsampc_eps: None,
            ttt_eta: 1e-3,
            ttt_mini_batch: 16,
            ttt_residual: false,
            subbands: Subbands::Diagonal,
            optimizer: OptimizerKind::Adam,
            lr: 3e-3,
            steps: 200,
            batch_size: 4,
            data_seed: 0,
            model_seed: 0,
            train_count: 200,
            test_count: 50,
            delta: 0.04,
            probe_count: crate::probe::PROBE_SIZE,
        }
    }
}

/// Every key, in serialisation order.
pub const KEYS: [&str; 20] = [
    "variant",
    "image_size",
    "channels",
    "rsampc_depth",
    "rsampc_eps",
    "ttt_eta",
    "ttt_mini_batch",
    "ttt_residual",
    "subbands",
    "optimizer",
    "lr",
    "steps",
    "batch_size",
    "data_seed",
    "model_seed",
    "train_count",
    "test_count",
    "delta",
    "probe_count",
    "config_version",
];

const VERSION: &str = "1";

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| config_err!("{key}={value:?}: {e}"))
}

impl ExperimentConfig {
    /// Large-scale reference settings: 1024² inputs, Adam at 1e-5, batch 16.
    pub fn full_scale() -> Self {
        Self {
            image_size: 1024,
            lr: 1e-5,
            batch_size: 16,
            ..Self::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "variant" => self.variant = v.parse()?,
            "image_size" => self.image_size = parse(key, v)?,
            "channels" => self.channels = parse(key, v)?,
            "rsampc_depth" => self.rsampc_depth = parse(key, v)?,
            "rsampc_eps" => self.rsampc_eps = if v == "none" { None } else { Some(parse(key, v)?) },
            "ttt_eta" => self.ttt_eta = parse(key, v)?,
            "ttt_mini_batch" => self.ttt_mini_batch = parse(key, v)?,
            "ttt_residual" => self.ttt_residual = parse(key, v)?,
            "subbands" => self.subbands = v.parse()?,
            "optimizer" => self.optimizer = v.parse()?,
            "lr" => self.lr = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "data_seed" => self.data_seed = parse(key, v)?,
            "model_seed" => self.model_seed = parse(key, v)?,
            "train_count" => self.train_count = parse(key, v)?,
            "test_count" => self.test_count = parse(key, v)?,
            "delta" => self.delta = parse(key, v)?,
            "probe_count" => self.probe_count = parse(key, v)?,
            "config_version" if v == VERSION => {}
            "config_version" => return Err(config_err!("unsupported config_version {v:?}")),
            other => return Err(config_err!("unknown config key {other:?}")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "variant" => self.variant.to_string(),
            "image_size" => self.image_size.to_string(),
            "channels" => self.channels.to_string(),
            "rsampc_depth" => self.rsampc_depth.to_string(),
            "rsampc_eps" => self.rsampc_eps.map_or("none".into(), |e| e.to_string()),
            "ttt_eta" => self.ttt_eta.to_string(),
            "ttt_mini_batch" => self.ttt_mini_batch.to_string(),
            "ttt_residual" => self.ttt_residual.to_string(),
            "subbands" => self.subbands.to_string(),
            "optimizer" => self.optimizer.to_string(),
            "lr" => self.lr.to_string(),
            "steps" => self.steps.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "data_seed" => self.data_seed.to_string(),
            "model_seed" => self.model_seed.to_string(),
            "train_count" => self.train_count.to_string(),
            "test_count" => self.test_count.to_string(),
            "delta" => self.delta.to_string(),
            "probe_count" => self.probe_count.to_string(),
            "config_version" => VERSION.into(),
            _ => return None,
        })
    }

    /// Canonical text: every key in fixed order, one `key=value` per line.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key}={}", self.get(key).expect("every key has a value")).expect("writing to a String");
        }
        out
    }

    /// Parse `key=value` lines over the defaults. Blank lines and `#`
    /// comments are skipped; errors name the 1-based line.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Parse { line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
            cfg.set(k, v).map_err(|e| bad(e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_kv()).map_err(|e| Error::io(path, e))
    }

    /// First 16 hex digits of the SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_kv().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("train_count", self.train_count),
            ("test_count", self.test_count),
            ("probe_count", self.probe_count),
        ] {
            if v == 0 {
                return Err(config_err!("{name} must be positive"));
            }
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(config_err!("lr must be finite and >= 0, got {}", self.lr));
        }
        self.model_config().validate()?;
        self.dataset_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut m = ModelConfig::new(self.variant, self.image_size, self.channels);
        m.rsampc_depth = self.rsampc_depth;
        m.rsampc_scale = self.rsampc_eps;
        m.ttt = TttConfig {
            dim: self.channels,
            inner_lr: self.ttt_eta,
            mini_batch: self.ttt_mini_batch,
            residual: self.ttt_residual,
        };
        m.subbands = self.subbands;
        m.seed = self.model_seed;
        m
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            image_size: self.image_size,
            train_count: self.train_count,
            test_count: self.test_count,
            delta: self.delta,
            seed: self.data_seed,
            ..DatasetConfig::default()
        }
    }
}

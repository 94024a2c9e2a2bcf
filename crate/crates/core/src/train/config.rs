use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use crate::data::{generate_synthetic, load_dataset, AugmentConfig, Sample, SplitSpec};
use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::model::ModelConfig;

/// Where training samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum DataSource {
    Synthetic { seed: u64, count: usize },
    Directory { root: PathBuf },
}

impl DataSource {
    /// Materialize every sample at `size x size`.
    pub fn load(&self, size: usize) -> Result<Vec<Sample>> {
        match self {
            DataSource::Synthetic { seed, count } => generate_synthetic(*seed, *count, size),
            DataSource::Directory { root } => load_dataset(root, size),
        }
    }
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic { seed: 0, count: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
    pub augment: AugmentConfig,
    pub split: SplitSpec,
    pub data: DataSource,
    pub batch_size: usize,
    pub epochs: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<u64>,
    /// Stop once the mask-free Dice on the training split reaches this.
    pub target_train_dice: Option<f64>,
    pub seed: u64,
    /// Worker threads for per-sample gradients; 1 disables threading.
    pub threads: Option<usize>,
    /// Score the training split without mask injection after each
    /// evaluated epoch.
    pub eval_train: bool,
    /// Evaluate every this many epochs; the final epoch is always scored.
    pub eval_every: usize,
    /// Box jitter applied to evaluation prompts (0 = exact boxes).
    pub eval_jitter: f64,
    /// Chance that a training sample gets its mask injected, when the
    /// encoder has injection enabled.
    pub inject_prob: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::desk(),
            loss: LossConfig::default(),
            optimizer: AdamConfig::default(),
            augment: AugmentConfig::default(),
            split: SplitSpec::default(),
            data: DataSource::default(),
            batch_size: 4,
            epochs: 50,
            max_steps: None,
            target_train_dice: None,
            seed: 0,
            threads: None,
            eval_train: true,
            eval_every: 1,
            eval_jitter: 0.0,
            inject_prob: 0.5,
        }
    }
}

impl TrainConfig {
    /// Full-size training schedule: batch 16, 200 epochs.
    pub fn full_scale() -> Self {
        Self {
            model: ModelConfig::full_scale(768, 24),
            batch_size: 16,
            epochs: 200,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.optimizer.validate()?;
        self.split.validate()?;
        if self.batch_size == 0 || self.epochs == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch_size, epochs and eval_every must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.inject_prob) {
            return Err(Error::Config("inject_prob must be in [0, 1]".into()));
        }
        if self.eval_jitter < 0.0 {
            return Err(Error::Config("eval_jitter must be >= 0".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(TrainConfig::from_json(r#"{"batch_size": 2}"#).is_ok());
        let e = TrainConfig::from_json(r#"{"batchsize": 2}"#).unwrap_err();
        assert!(e.to_string().contains("batchsize"), "{e}");
        let e = TrainConfig::from_json(r#"{"model": {"encoder": {"dmodel": 8}}}"#).unwrap_err();
        assert!(e.to_string().contains("dmodel"), "{e}");
    }

    #[test]
    fn json_round_trip() {
        let c = TrainConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(TrainConfig::from_json(&s).unwrap(), c);
    }
}

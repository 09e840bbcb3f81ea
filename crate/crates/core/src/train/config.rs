use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::corpus::TaskData;
use crate::model::HyperParams;

const SHIPPED_DEFAULTS: &str = include_str!("../../config/defaults.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lr_grid: Vec<f64>,
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Keep only this many of the most recent sentences.
    pub truncation: usize,
    pub seeds_per_task: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Stop once validation error reaches exactly zero.
    pub early_stop: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning rate must be positive");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip norm must be positive");
        }
        if self.batch_size < 1 {
            return bad("batch size must be at least 1");
        }
        if self.truncation < 1 {
            return bad("truncation must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.epsilon.is_nan()
            || self.epsilon <= 0.0
        {
            return bad("Adam moments must lie in [0, 1) and epsilon must be positive");
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Defaults::shipped().train
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub slots: usize,
    pub normalize_relations: bool,
    pub prelu_slope_init: f64,
    pub init_std: f64,
}

impl ModelConfig {
    /// Vocabulary size and maximum length come from the task data.
    pub fn hyper_for(&self, data: &TaskData) -> HyperParams {
        HyperParams {
            dim: self.dim,
            slots: self.slots,
            max_len: data.max_len().max(1),
            vocab_size: data.vocab.len(),
            normalize_relations: self.normalize_relations,
            prelu_slope_init: self.prelu_slope_init,
            init_std: self.init_std,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Defaults::shipped().model
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskOverride {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub truncation: Option<usize>,
    pub max_epochs: Option<usize>,
}

/// Contents of `config/defaults.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Defaults {
    pub train: TrainConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub task: BTreeMap<String, TaskOverride>,
}

impl Defaults {
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_DEFAULTS).expect("shipped defaults parse")
    }

    pub fn parse(text: &str) -> Result<Self, TrainError> {
        toml::from_str(text).map_err(|e| TrainError::InvalidConfig(e.to_string()))
    }

    /// The `[train]` section with the task's overrides applied.
    pub fn train_config(&self, task: u8) -> TrainConfig {
        let mut cfg = self.train.clone();
        if let Some(o) = self.task.get(&task.to_string()) {
            if let Some(v) = o.learning_rate {
                cfg.learning_rate = v;
            }
            if let Some(v) = o.batch_size {
                cfg.batch_size = v;
            }
            if let Some(v) = o.truncation {
                cfg.truncation = v;
            }
            if let Some(v) = o.max_epochs {
                cfg.max_epochs = v;
            }
        }
        cfg
    }
}

//! Model and training hyperparameters, with the published presets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DEFAULT_TIMESTEPS;

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_PATIENCE: usize = 5;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Stacked,
    Bidirectional,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Stacked => "stacked",
            Variant::Bidirectional => "bidirectional",
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "stacked" => Ok(Variant::Stacked),
            "bidirectional" | "bilstm" => Ok(Variant::Bidirectional),
            other => Err(format!("unknown variant {other:?} (stacked, bidirectional)")),
        }
    }
}

/// Datasets with published hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    UnswNb15,
    BotIot,
}

/// Every violation found, not just the first.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid model configuration: {}", violations.join("; "))]
pub struct ConfigError {
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub layer_cells: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub timesteps: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub clip_global_norm: Option<f64>,
    #[serde(default)]
    pub early_stop_patience: Option<usize>,
}

impl ModelConfig {
    pub fn new(variant: Variant, layer_cells: Vec<usize>, epochs: usize, learning_rate: f64) -> Self {
        Self {
            variant,
            layer_cells,
            epochs,
            learning_rate,
            timesteps: DEFAULT_TIMESTEPS,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: DEFAULT_SEED,
            clip_global_norm: None,
            early_stop_patience: Some(DEFAULT_PATIENCE),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Vec::new();
        if self.layer_cells.is_empty() {
            v.push("layer_cells must name at least one layer".to_string());
        }
        if self.layer_cells.contains(&0) {
            v.push("every layer needs at least one cell".to_string());
        }
        if self.variant == Variant::Bidirectional && self.layer_cells.len() > 1 {
            v.push(format!(
                "bidirectional models have exactly one layer, got {}",
                self.layer_cells.len()
            ));
        }
        if self.epochs == 0 {
            v.push("epochs must be at least 1".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            v.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.timesteps == 0 {
            v.push("timesteps must be at least 1".to_string());
        }
        if self.batch_size == 0 {
            v.push("batch_size must be at least 1".to_string());
        }
        if let Some(c) = self.clip_global_norm {
            if !(c > 0.0 && c.is_finite()) {
                v.push(format!("clip_global_norm must be positive, got {c}"));
            }
        }
        if self.early_stop_patience == Some(0) {
            v.push("early_stop_patience must be at least 1 when set".to_string());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { violations: v })
        }
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "variant={} layers={:?} epochs={} lr={} timesteps={} batch_size={} seed={} clip={} patience={}",
            self.variant.as_str(),
            self.layer_cells,
            self.epochs,
            self.learning_rate,
            self.timesteps,
            self.batch_size,
            self.seed,
            self.clip_global_norm.map_or("off".to_string(), |c| c.to_string()),
            self.early_stop_patience.map_or("off".to_string(), |p| p.to_string()),
        )
    }
}

/// Published layer sizes, epochs and learning rates. Batch size, timesteps and
/// patience take the crate defaults.
pub fn preset_config(dataset: Benchmark, variant: Variant) -> ModelConfig {
    let (layers, epochs, lr) = match (dataset, variant) {
        (Benchmark::UnswNb15, Variant::Stacked) => (vec![40, 128, 128, 64], 50, 0.002),
        (Benchmark::UnswNb15, Variant::Bidirectional) => (vec![64], 50, 0.0015),
        (Benchmark::BotIot, Variant::Stacked) => (vec![32, 32], 5, 0.002),
        (Benchmark::BotIot, Variant::Bidirectional) => (vec![12], 5, 0.001),
    };
    ModelConfig::new(variant, layers, epochs, lr)
}

pub const PRESET_NAMES: [&str; 4] = ["unsw-stacked", "unsw-bilstm", "botiot-stacked", "botiot-bilstm"];

pub fn preset_by_name(name: &str) -> Option<ModelConfig> {
    let (d, v) = match name {
        "unsw-stacked" => (Benchmark::UnswNb15, Variant::Stacked),
        "unsw-bilstm" => (Benchmark::UnswNb15, Variant::Bidirectional),
        "botiot-stacked" => (Benchmark::BotIot, Variant::Stacked),
        "botiot-bilstm" => (Benchmark::BotIot, Variant::Bidirectional),
        _ => return None,
    };
    Some(preset_config(d, v))
}

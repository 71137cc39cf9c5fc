use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!("unknown profile '{other}' (expected desk or paper)"))),
        }
    }
}

/// Encoder shape without the corpus-dependent vocabulary size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
}

impl Default for EncoderDims {
    fn default() -> Self {
        let d = EncoderConfig::desk(1);
        EncoderDims {
            d_model: d.d_model,
            n_heads: d.n_heads,
            n_layers: d.n_layers,
            d_ff: d.d_ff,
            max_len: d.max_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub profile: Profile,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub learning_rates: Vec<f64>,
    pub batch_size: usize,
    pub dropout_p: f64,
    /// 0 trains without the event-presence loss, 1 with it.
    pub sep_weight: f64,
    pub encoder: EncoderDims,
    pub vocab_min_count: usize,
    /// Global gradient-norm clip; off when `None`.
    pub grad_clip: Option<f64>,
    /// Event-probability threshold for the diagnostic flag.
    pub threshold: f64,
    pub selection_metric: String,
}

pub const SELECTION_METRIC: &str = "dev_f1";

impl TrainConfig {
    /// Random-init toy scale: 50 epochs, seeds 0..4, lr {1e-3, 3e-3}, batch 8.
    pub fn desk() -> Self {
        TrainConfig {
            profile: Profile::Desk,
            epochs: 50,
            seeds: (0..5).collect(),
            learning_rates: vec![1e-3, 3e-3],
            batch_size: 8,
            dropout_p: 0.1,
            sep_weight: 1.0,
            encoder: EncoderDims::default(),
            vocab_min_count: 1,
            grad_clip: None,
            threshold: 0.5,
            selection_metric: SELECTION_METRIC.to_owned(),
        }
    }

    /// Published fine-tuning hyperparameters: 20 epochs, 5 seeds,
    /// lr {3e-5, 5e-5}, batch 30, dropout 0.3.
    pub fn paper() -> Self {
        TrainConfig {
            profile: Profile::Paper,
            epochs: 20,
            learning_rates: vec![3e-5, 5e-5],
            batch_size: 30,
            dropout_p: 0.3,
            ..TrainConfig::desk()
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => TrainConfig::desk(),
            Profile::Paper => TrainConfig::paper(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.learning_rates.is_empty() {
            return Err(Error::Config("at least one learning rate is required".into()));
        }
        if let Some(lr) = self.learning_rates.iter().find(|lr| !(lr.is_finite() && **lr >= 0.0)) {
            return Err(Error::Config(format!("learning rate {lr} must be finite and non-negative")));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.sep_weight != 0.0 && self.sep_weight != 1.0 {
            return Err(Error::Config(format!("sep weight must be 0 or 1, got {}", self.sep_weight)));
        }
        if self.vocab_min_count == 0 {
            return Err(Error::Config("vocab min count must be at least 1".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!("gradient clip {c} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.selection_metric != SELECTION_METRIC {
            return Err(Error::Config(format!(
                "selection metric '{}' unsupported (only {SELECTION_METRIC})",
                self.selection_metric
            )));
        }
        self.encoder_config(1).validate()
    }

    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            d_model: self.encoder.d_model,
            n_heads: self.encoder.n_heads,
            n_layers: self.encoder.n_layers,
            d_ff: self.encoder.d_ff,
            max_len: self.encoder.max_len,
            dropout_p: self.dropout_p,
        }
    }
}

//! Experiment configuration: a flat TOML table with typed values. Unknown
//! keys are rejected so a typo cannot silently fall back to a default.
//!
//! ```toml
//! task = "countdown"
//! method = "sft"
//! seed = 7
//! epochs = 200
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::countdown::OperandCount;
use crate::policy::{MAX_LEN, MAX_TEMPERATURE};

use super::HarnessError;

/// Published full-scale hyper-parameters, kept for reference only; the toy
/// defaults below are tuned separately.
pub const PAPER_LEARNING_RATE: f64 = 5e-6;
pub const PAPER_EPOCHS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Countdown,
    ToyPreference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sft,
    Dpo,
    Rloo,
}

/// Reward signal for RLOO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardSource {
    /// Ground-truth linear teacher (toy preference task).
    Teacher,
    /// Exact checker, 1 for a verified answer else 0 (Countdown).
    Verifier,
    /// Trained regression reward model from `reward_checkpoint`.
    Pointwise,
    /// Trained Bradley-Terry reward model from `reward_checkpoint`.
    Siamese,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub task: Task,
    pub method: Method,
    /// Master seed; every other seed is derived from it.
    pub seed: u64,

    pub context: usize,
    /// Start from this policy checkpoint instead of zero weights. It is
    /// also the DPO reference.
    pub init_checkpoint: Option<String>,
    pub adapter: bool,
    pub adapter_rank: usize,
    pub frozen_base: bool,

    /// RLOO only.
    pub reward: Option<RewardSource>,
    pub reward_checkpoint: Option<String>,

    pub optimizer: OptimizerName,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    pub log_every: usize,

    pub beta: f64,
    pub rloo_samples: usize,
    pub temperature: f64,
    pub max_len: usize,
    /// Bradley-Terry temperature used to label synthetic toy pairs.
    pub label_temperature: f64,

    /// Training data file; generated from the seed when absent.
    pub train_data: Option<String>,
    pub train_size: usize,
    /// Held-out split size; 0 picks the task default (1000 problems or
    /// 200 prompts).
    pub eval_size: usize,
    pub operands: OperandCount,
    pub min_value: u64,
    pub max_value: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: Task::Countdown,
            method: Method::Sft,
            seed: 0,
            context: 8,
            init_checkpoint: None,
            adapter: false,
            adapter_rank: 8,
            frozen_base: true,
            reward: None,
            reward_checkpoint: None,
            optimizer: OptimizerName::Adam,
            learning_rate: 0.02,
            epochs: 200,
            batch_size: 32,
            shuffle: false,
            log_every: 1,
            beta: crate::objectives::DEFAULT_BETA,
            rloo_samples: crate::objectives::DEFAULT_SAMPLES,
            temperature: 1.0,
            max_len: 24,
            label_temperature: 1.0,
            train_data: None,
            train_size: 1600,
            eval_size: 0,
            operands: OperandCount::Mixed,
            min_value: 1,
            max_value: 9,
        }
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every cross-field rule before any work starts.
    pub fn validate(&self) -> Result<(), HarnessError> {
        match (self.method, self.reward) {
            (Method::Rloo, None) => return Err(invalid("method rloo needs a reward source")),
            (Method::Sft | Method::Dpo, Some(r)) => {
                return Err(invalid(format!("reward {r:?} is only used by rloo")));
            }
            _ => {}
        }
        match (self.task, self.reward) {
            (Task::ToyPreference, Some(RewardSource::Verifier)) => {
                return Err(invalid("the verifier reward needs the countdown task"));
            }
            (Task::Countdown, Some(RewardSource::Teacher)) => {
                return Err(invalid("the teacher reward needs the toy_preference task"));
            }
            _ => {}
        }
        let needs_rm = matches!(self.reward, Some(RewardSource::Pointwise | RewardSource::Siamese));
        if needs_rm != self.reward_checkpoint.is_some() {
            return Err(invalid(if needs_rm {
                "pointwise and siamese rewards need reward_checkpoint"
            } else {
                "reward_checkpoint is only used by pointwise and siamese rewards"
            }));
        }
        if self.context == 0 {
            return Err(invalid("context must be positive"));
        }
        if self.adapter && self.adapter_rank == 0 {
            return Err(invalid("adapter_rank must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.log_every == 0 {
            return Err(invalid("batch_size and log_every must be positive"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(invalid("beta must be positive"));
        }
        if self.method == Method::Rloo && self.rloo_samples < 2 {
            return Err(invalid("rloo_samples must be at least 2"));
        }
        if !(self.temperature > 0.0 && self.temperature <= MAX_TEMPERATURE) {
            return Err(invalid(format!("temperature must lie in (0, {MAX_TEMPERATURE}]")));
        }
        if self.max_len == 0 || self.max_len > MAX_LEN {
            return Err(invalid(format!("max_len must lie in 1..={MAX_LEN}")));
        }
        if !(self.label_temperature.is_finite() && self.label_temperature > 0.0) {
            return Err(invalid("label_temperature must be positive"));
        }
        if self.train_data.is_none() && self.train_size == 0 {
            return Err(invalid("train_size must be positive"));
        }
        if !(1 <= self.min_value && self.min_value <= self.max_value && self.max_value <= 100) {
            return Err(invalid("value range must lie within 1..=100"));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

//! Training objectives for the policy and the optimizer that applies them.

mod dpo;
mod optim;
mod rloo;
mod sft;

use thiserror::Error;

use crate::policy::PolicyError;

pub use dpo::{dpo_batch_loss, dpo_loss, dpo_loss_from_margin, DpoConfig, DpoOutput, DEFAULT_BETA};
pub use optim::{OptimError, OptimizerConfig, OptimizerKind, OptimizerState};
pub use rloo::{
    rloo_from_samples, rloo_gradient, Baseline, GradientConvention, RlooConfig, RlooEstimate,
    DEFAULT_SAMPLES,
};
pub use sft::{sft_loss, Demonstration};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("chosen and rejected responses are identical")]
    IdenticalResponses,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("reward function failed on sample {sample}: {message}")]
    Reward { sample: usize, message: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

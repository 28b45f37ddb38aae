//! Linear reward models over a fixed encoder: pointwise regression,
//! Siamese Bradley-Terry, and the fixed teacher used for synthetic labels.

mod checkpoint;
pub mod encoder;
mod model;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::OptimError;
use crate::policy::{TokenId, VocabError};
use crate::trainable::ShapeError;

pub use checkpoint::{load_reward, save_reward};
pub use encoder::RewardEncoder;
pub use model::{bt_loss, pointwise_loss, RewardKind, RewardParameters};
pub use train::{
    dataset_loss, pairwise_accuracy, threshold_accuracy, train_reward, RewardDataset,
    RewardTrainConfig, RewardTrainReport, TrainedReward,
};

/// `(x, y⁺, y⁻)`: `chosen` is preferred over `rejected` for `prompt`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: Vec<TokenId>,
    pub chosen: Vec<TokenId>,
    pub rejected: Vec<TokenId>,
}

/// Response with a scalar regression target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub prompt: Vec<TokenId>,
    pub response: Vec<TokenId>,
    pub gold: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("regression target is not finite: {0}")]
    NonFiniteLabel(f64),
    #[error("empty training set")]
    EmptyDataset,
    #[error("dataset does not match reward kind {0:?}")]
    KindMismatch(RewardKind),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("reward checkpoint: {0}")]
    Checkpoint(String),
}

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::encoder::RewardEncoder;
use super::model::{bt_loss, pointwise_loss, RewardKind, RewardParameters};
use super::{LabeledExample, PreferencePair, RewardError};
use crate::objectives::{OptimizerConfig, OptimizerState};
use crate::rng::seeded;
use crate::trainable::Trainable;

#[derive(Debug, Clone, PartialEq)]
pub enum RewardDataset {
    Pairs(Vec<PreferencePair>),
    Labeled(Vec<LabeledExample>),
}

impl RewardDataset {
    pub fn len(&self) -> usize {
        match self {
            RewardDataset::Pairs(p) => p.len(),
            RewardDataset::Labeled(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTrainConfig {
    pub kind: RewardKind,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Reshuffle example order every epoch; fixed order otherwise.
    pub shuffle: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTrainReport {
    pub train_loss: f64,
    pub heldout_loss: f64,
    /// Fraction of ordered pairs ranked correctly on the held-out set.
    pub pairwise_accuracy: f64,
    /// Agreement of `score ≥ 0.5` with `gold ≥ 0.5` (labeled data only).
    pub threshold_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedReward {
    pub params: RewardParameters,
    pub report: RewardTrainReport,
}

fn example_loss(rp: &RewardParameters, data: &RewardDataset, i: usize) -> Result<(f64, Vec<f64>), RewardError> {
    match data {
        RewardDataset::Pairs(p) => bt_loss(rp, &p[i]),
        RewardDataset::Labeled(l) => pointwise_loss(rp, &l[i]),
    }
}

/// Mean loss over the whole dataset.
pub fn dataset_loss(rp: &RewardParameters, data: &RewardDataset) -> Result<f64, RewardError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..data.len() {
        total += example_loss(rp, data, i)?.0;
    }
    Ok(total / data.len() as f64)
}

/// Pairwise ranking accuracy. For preference pairs: share with
/// `r(y⁺) > r(y⁻)`. For labeled data: share of example pairs with distinct
/// gold values whose scores are ordered the same way (ties count half).
pub fn pairwise_accuracy(rp: &RewardParameters, data: &RewardDataset) -> Result<f64, RewardError> {
    match data {
        RewardDataset::Pairs(pairs) => {
            if pairs.is_empty() {
                return Ok(0.0);
            }
            let mut correct = 0usize;
            for p in pairs {
                if rp.score(&p.prompt, &p.chosen)? > rp.score(&p.prompt, &p.rejected)? {
                    correct += 1;
                }
            }
            Ok(correct as f64 / pairs.len() as f64)
        }
        RewardDataset::Labeled(ex) => {
            let scores = ex
                .iter()
                .map(|e| rp.score(&e.prompt, &e.response))
                .collect::<Result<Vec<_>, _>>()?;
            let (mut hits, mut total) = (0.0, 0usize);
            for i in 0..ex.len() {
                for j in 0..ex.len() {
                    if ex[i].gold > ex[j].gold {
                        total += 1;
                        if scores[i] > scores[j] {
                            hits += 1.0;
                        } else if scores[i] == scores[j] {
                            hits += 0.5;
                        }
                    }
                }
            }
            Ok(if total == 0 { 0.0 } else { hits / total as f64 })
        }
    }
}

pub fn threshold_accuracy(rp: &RewardParameters, examples: &[LabeledExample]) -> Result<f64, RewardError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for e in examples {
        if (rp.score(&e.prompt, &e.response)? >= 0.5) == (e.gold >= 0.5) {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

/// Mini-batch training from zero weights. Deterministic given the seed.
pub fn train_reward(encoder: RewardEncoder, train: &RewardDataset, heldout: &RewardDataset, cfg: &RewardTrainConfig) -> Result<TrainedReward, RewardError> {
    if train.is_empty() {
        return Err(RewardError::EmptyDataset);
    }
    match (cfg.kind, train) {
        (RewardKind::Siamese, RewardDataset::Pairs(_)) | (RewardKind::Pointwise, RewardDataset::Labeled(_)) => {}
        (kind, _) => return Err(RewardError::KindMismatch(kind)),
    }
    if std::mem::discriminant(train) != std::mem::discriminant(heldout) {
        return Err(RewardError::KindMismatch(cfg.kind));
    }
    if cfg.batch_size == 0 {
        return Err(RewardError::InvalidConfig("batch_size must be positive".into()));
    }
    let mut rp = RewardParameters::zeros(cfg.kind, encoder);
    let mut opt = OptimizerState::new(cfg.optimizer, rp.trainable_len());
    let mut rng = seeded(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; rp.trainable_len()];
            for &i in batch {
                let (_, g) = example_loss(&rp, train, i)?;
                for (acc, v) in grad.iter_mut().zip(&g) {
                    *acc += v;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|v| *v *= scale);
            opt.step(&mut rp, &grad)?;
        }
    }
    let report = RewardTrainReport {
        train_loss: dataset_loss(&rp, train)?,
        heldout_loss: dataset_loss(&rp, heldout)?,
        pairwise_accuracy: pairwise_accuracy(&rp, heldout)?,
        threshold_accuracy: match heldout {
            RewardDataset::Labeled(ex) => Some(threshold_accuracy(&rp, ex)?),
            RewardDataset::Pairs(_) => None,
        },
    };
    Ok(TrainedReward { params: rp, report })
}

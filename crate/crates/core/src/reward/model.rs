use serde::{Deserialize, Serialize};

use super::encoder::RewardEncoder;
use super::{LabeledExample, PreferencePair, RewardError};
use crate::numeric::{sigmoid, softplus};
use crate::policy::TokenId;
use crate::trainable::{ShapeError, Trainable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    /// Regression head fit to scalar targets.
    Pointwise,
    /// Shared-weight pairwise model fit with the Bradley-Terry objective.
    Siamese,
    /// Fixed ground-truth scorer used to label and judge synthetic data.
    Teacher,
}

/// Linear scorer `r(x, y) = w · encode(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardParameters {
    pub kind: RewardKind,
    pub w: Vec<f64>,
    encoder: RewardEncoder,
}

impl RewardParameters {
    pub fn zeros(kind: RewardKind, encoder: RewardEncoder) -> Self {
        RewardParameters {
            kind,
            w: vec![0.0; encoder.dim()],
            encoder,
        }
    }

    pub fn with_weights(kind: RewardKind, encoder: RewardEncoder, w: Vec<f64>) -> Result<Self, RewardError> {
        if w.len() != encoder.dim() {
            return Err(ShapeError {
                expected: encoder.dim(),
                got: w.len(),
            }
            .into());
        }
        Ok(RewardParameters { kind, w, encoder })
    }

    pub fn encoder(&self) -> &RewardEncoder {
        &self.encoder
    }

    pub fn score(&self, x: &[TokenId], y: &[TokenId]) -> Result<f64, RewardError> {
        let f = self.encoder.encode(x, y)?;
        Ok(dot(&self.w, &f))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Trainable for RewardParameters {
    fn trainable_len(&self) -> usize {
        self.w.len()
    }

    fn trainable(&self) -> Vec<f64> {
        self.w.clone()
    }

    fn set_trainable(&mut self, values: &[f64]) -> Result<(), ShapeError> {
        if values.len() != self.w.len() {
            return Err(ShapeError {
                expected: self.w.len(),
                got: values.len(),
            });
        }
        self.w.copy_from_slice(values);
        Ok(())
    }
}

/// `−log σ(r(x, y⁺) − r(x, y⁻))` and its gradient in `w`.
pub fn bt_loss(rp: &RewardParameters, pair: &PreferencePair) -> Result<(f64, Vec<f64>), RewardError> {
    let fp = rp.encoder.encode(&pair.prompt, &pair.chosen)?;
    let fn_ = rp.encoder.encode(&pair.prompt, &pair.rejected)?;
    let gap = dot(&rp.w, &fp) - dot(&rp.w, &fn_);
    let coef = -sigmoid(-gap);
    let grad = fp.iter().zip(&fn_).map(|(a, b)| coef * (a - b)).collect();
    Ok((softplus(-gap), grad))
}

/// `(r(x, y) − gold)²` and its gradient in `w`.
pub fn pointwise_loss(rp: &RewardParameters, ex: &LabeledExample) -> Result<(f64, Vec<f64>), RewardError> {
    if !ex.gold.is_finite() {
        return Err(RewardError::NonFiniteLabel(ex.gold));
    }
    let f = rp.encoder.encode(&ex.prompt, &ex.response)?;
    let resid = dot(&rp.w, &f) - ex.gold;
    Ok((resid * resid, f.iter().map(|v| 2.0 * resid * v).collect()))
}

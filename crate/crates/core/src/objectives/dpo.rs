//! Direct preference optimization.
//!
//! With `Δ± = log π_θ(y±|x) − log π_ref(y±|x)` the per-pair loss is
//!
//! ```text
//! L = −log[ exp(βΔ⁺) / (exp(βΔ⁺) + exp(βΔ⁻)) ] = softplus(−β(Δ⁺ − Δ⁻))
//! ```
//!
//! and only the policy terms carry gradient:
//! `∇L = −β σ(−β(Δ⁺ − Δ⁻)) (∇log π_θ(y⁺|x) − ∇log π_θ(y⁻|x))`.

use std::sync::Arc;

use rayon::prelude::*;

use super::ObjectiveError;
use crate::numeric::{sigmoid, softplus};
use crate::policy::{logprob, logprob_and_grad, PolicyGradient, PolicyParameters};
use crate::reward::PreferencePair;

pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct DpoConfig {
    pub beta: f64,
    /// Frozen reference policy.
    pub reference: Arc<PolicyParameters>,
}

impl DpoConfig {
    pub fn new(beta: f64, reference: Arc<PolicyParameters>) -> Result<Self, ObjectiveError> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(ObjectiveError::InvalidConfig(format!("beta must be positive, got {beta}")));
        }
        Ok(DpoConfig { beta, reference })
    }
}

#[derive(Debug, Clone)]
pub struct DpoOutput {
    pub loss: f64,
    pub grad: PolicyGradient,
    pub delta_chosen: f64,
    pub delta_rejected: f64,
}

impl DpoOutput {
    pub fn margin(&self) -> f64 {
        self.delta_chosen - self.delta_rejected
    }
}

/// Loss as a function of the log-ratio margin `Δ⁺ − Δ⁻`.
pub fn dpo_loss_from_margin(beta: f64, margin: f64) -> f64 {
    softplus(-beta * margin)
}

pub fn dpo_loss(params: &PolicyParameters, cfg: &DpoConfig, pair: &PreferencePair) -> Result<DpoOutput, ObjectiveError> {
    if pair.chosen == pair.rejected {
        return Err(ObjectiveError::IdenticalResponses);
    }
    let (lp_pos, g_pos) = logprob_and_grad(params, &pair.prompt, &pair.chosen)?;
    let (lp_neg, g_neg) = logprob_and_grad(params, &pair.prompt, &pair.rejected)?;
    let ref_pos = logprob(&cfg.reference, &pair.prompt, &pair.chosen)?.total;
    let ref_neg = logprob(&cfg.reference, &pair.prompt, &pair.rejected)?.total;
    let delta_chosen = lp_pos.total - ref_pos;
    let delta_rejected = lp_neg.total - ref_neg;
    let z = cfg.beta * (delta_chosen - delta_rejected);
    let coef = -cfg.beta * sigmoid(-z);
    let mut grad = PolicyGradient::zeros_for(params);
    grad.add_scaled(&g_pos, coef);
    grad.add_scaled(&g_neg, -coef);
    Ok(DpoOutput {
        loss: softplus(-z),
        grad,
        delta_chosen,
        delta_rejected,
    })
}

/// Mean loss and gradient over a batch of pairs, reduced in index order.
pub fn dpo_batch_loss(params: &PolicyParameters, cfg: &DpoConfig, pairs: &[PreferencePair]) -> Result<(f64, PolicyGradient), ObjectiveError> {
    if pairs.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let outs = pairs
        .par_iter()
        .map(|p| dpo_loss(params, cfg, p))
        .collect::<Result<Vec<_>, _>>()?;
    let scale = 1.0 / pairs.len() as f64;
    let mut grad = PolicyGradient::zeros_for(params);
    let mut loss = 0.0;
    for o in &outs {
        loss += o.loss;
        grad.add_scaled(&o.grad, scale);
    }
    Ok((loss * scale, grad))
}

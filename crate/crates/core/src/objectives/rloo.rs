//! REINFORCE with a leave-one-out baseline.
//!
//! For `N` samples `y_i ~ π_θ(·|x)` with rewards `r_i`, sample `i` is
//! weighted by `A_i = r_i − mean_{j≠i} r_j` and the loss gradient estimate is
//! `−(1/N) Σ_i A_i ∇log π_θ(y_i|x)`.
//!
//! `A_i` is evaluated as `Σ_{j≠i} (r_i − r_j) / (N − 1)`. Differences of
//! shifted rewards are exact whenever the shifted rewards themselves are,
//! so a constant reward shift leaves the estimate bit-identical.

use serde::{Deserialize, Serialize};

use super::ObjectiveError;
use crate::policy::{grad_logprob, sample_with_rng, PolicyGradient, PolicyParameters, SampleConfig, TokenId};
use crate::rng::seeded;

pub const DEFAULT_SAMPLES: usize = 4;

/// Sign of the returned estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientConvention {
    /// Gradient of the loss `−E[r]`; feed directly to a descent optimizer.
    #[default]
    Descent,
    /// Gradient of `E[r]`; negate before a descent step.
    Ascent,
}

impl GradientConvention {
    /// Sign that turns an estimate in this convention into a loss gradient.
    pub fn descent_sign(self) -> f64 {
        match self {
            GradientConvention::Descent => 1.0,
            GradientConvention::Ascent => -1.0,
        }
    }
}

/// `Zero` is the plain REINFORCE control used for variance comparisons;
/// it is not meant for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    #[default]
    LeaveOneOut,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlooConfig {
    pub samples: usize,
    pub sample: SampleConfig,
    pub convention: GradientConvention,
    pub baseline: Baseline,
}

impl RlooConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if self.samples < 2 {
            return Err(ObjectiveError::InvalidConfig(format!(
                "leave-one-out needs at least 2 samples, got {}",
                self.samples
            )));
        }
        self.sample.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RlooEstimate {
    pub grad: PolicyGradient,
    pub samples: Vec<Vec<TokenId>>,
    pub rewards: Vec<f64>,
    /// `mean_{j≠i} r_j` (zero under the control baseline).
    pub baselines: Vec<f64>,
    /// Raw advantages, independent of the gradient convention.
    pub advantages: Vec<f64>,
}

fn advantages(rewards: &[f64], baseline: Baseline) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let denom = (n - 1) as f64;
    match baseline {
        Baseline::Zero => (rewards.to_vec(), vec![0.0; n]),
        Baseline::LeaveOneOut => {
            let adv = (0..n)
                .map(|i| (0..n).filter(|&j| j != i).map(|j| rewards[i] - rewards[j]).sum::<f64>() / denom)
                .collect();
            let base = (0..n)
                .map(|i| (0..n).filter(|&j| j != i).map(|j| rewards[j]).sum::<f64>() / denom)
                .collect();
            (adv, base)
        }
    }
}

/// Estimator evaluated on given samples and rewards.
pub fn rloo_from_samples(
    params: &PolicyParameters,
    x: &[TokenId],
    samples: Vec<Vec<TokenId>>,
    rewards: Vec<f64>,
    convention: GradientConvention,
    baseline: Baseline,
) -> Result<RlooEstimate, ObjectiveError> {
    if samples.len() < 2 || samples.len() != rewards.len() {
        return Err(ObjectiveError::InvalidConfig(format!(
            "need matching samples and rewards with N >= 2, got {} and {}",
            samples.len(),
            rewards.len()
        )));
    }
    let (adv, baselines) = advantages(&rewards, baseline);
    let n = samples.len() as f64;
    let sign = match convention {
        GradientConvention::Descent => -1.0,
        GradientConvention::Ascent => 1.0,
    };
    let mut grad = PolicyGradient::zeros_for(params);
    for (y, &a) in samples.iter().zip(&adv) {
        if a == 0.0 {
            continue;
        }
        let g = grad_logprob(params, x, y)?;
        grad.add_scaled(&g, sign * a / n);
    }
    Ok(RlooEstimate {
        grad,
        samples,
        rewards,
        baselines,
        advantages: adv,
    })
}

/// Draws `N` samples from one seeded stream, scores them and returns the
/// estimate with full diagnostics. A reward failure aborts this prompt.
pub fn rloo_gradient<F>(params: &PolicyParameters, mut reward_fn: F, x: &[TokenId], cfg: &RlooConfig) -> Result<RlooEstimate, ObjectiveError>
where
    F: FnMut(&[TokenId], &[TokenId]) -> Result<f64, String>,
{
    cfg.validate()?;
    let mut rng = seeded(cfg.sample.rng_seed);
    let samples = (0..cfg.samples)
        .map(|_| sample_with_rng(params, x, cfg.sample.temperature, cfg.sample.max_len, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let rewards = samples
        .iter()
        .enumerate()
        .map(|(i, y)| match reward_fn(x, y) {
            Ok(r) if r.is_finite() => Ok(r),
            Ok(r) => Err(ObjectiveError::Reward {
                sample: i,
                message: format!("non-finite reward {r}"),
            }),
            Err(message) => Err(ObjectiveError::Reward { sample: i, message }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    rloo_from_samples(params, x, samples, rewards, cfg.convention, cfg.baseline)
}

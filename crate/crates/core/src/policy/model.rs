use ndarray::Array2;
use rand::Rng as _;
use thiserror::Error;

use super::features::SparseFeatures;
use super::params::{PolicyGradient, PolicyParameters};
use super::vocab::{TokenId, VocabError};
use crate::numeric::log_softmax;
use crate::rng::{seeded, Rng};

/// Temperatures at or below this are greedy argmax decoding.
pub const GREEDY_THRESHOLD: f64 = 1e-6;
pub const MAX_TEMPERATURE: f64 = 4.0;
pub const MAX_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("no adapter attached")]
    NoAdapter,
    #[error("invalid sampling config: {0}")]
    InvalidSampleConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    pub temperature: f64,
    pub max_len: usize,
    pub rng_seed: u64,
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.temperature > 0.0 && self.temperature <= MAX_TEMPERATURE) {
            return Err(PolicyError::InvalidSampleConfig(format!(
                "temperature {} outside (0, {MAX_TEMPERATURE}]",
                self.temperature
            )));
        }
        if self.max_len == 0 || self.max_len > MAX_LEN {
            return Err(PolicyError::InvalidSampleConfig(format!(
                "max_len {} outside 1..={MAX_LEN}",
                self.max_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogProb {
    pub total: f64,
    pub per_token: Vec<f64>,
}

fn logits(w: &Array2<f64>, feats: &SparseFeatures) -> Vec<f64> {
    (0..w.nrows())
        .map(|v| feats.iter().map(|&(i, x)| w[[v, i]] * x).sum())
        .collect()
}

/// Step-wise log-distributions of the policy along `y`, conditioned on `x`.
fn step_log_dists(params: &PolicyParameters, w: &Array2<f64>, x: &[TokenId], y: &[TokenId]) -> Result<Vec<(SparseFeatures, Vec<f64>)>, PolicyError> {
    params.vocab().check(y)?;
    let fm = params.features();
    let bag = fm.prompt_bag(x)?;
    Ok((0..y.len())
        .map(|t| {
            let f = fm.step_sparse(&bag, &y[..t]);
            let lp = log_softmax(&logits(w, &f));
            (f, lp)
        })
        .collect())
}

/// Log-distribution over the next token after `prefix`.
pub fn next_token_logprobs(params: &PolicyParameters, x: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>, PolicyError> {
    params.vocab().check(prefix)?;
    let fm = params.features();
    let bag = fm.prompt_bag(x)?;
    let f = fm.step_sparse(&bag, prefix);
    Ok(log_softmax(&logits(&params.effective_weights(), &f)))
}

/// `log π(y | x)` at temperature 1, with per-token terms.
pub fn logprob(params: &PolicyParameters, x: &[TokenId], y: &[TokenId]) -> Result<LogProb, PolicyError> {
    let w = params.effective_weights();
    let per_token: Vec<f64> = step_log_dists(params, &w, x, y)?
        .iter()
        .zip(y)
        .map(|((_, lp), tok)| lp[tok.index()])
        .collect();
    Ok(LogProb {
        total: per_token.iter().sum(),
        per_token,
    })
}

/// Analytic gradient of `log π(y | x)`.
///
/// With respect to the effective matrix this is
/// `Σ_t (onehot(y_t) − p_t) f_tᵀ`; adapter blocks follow by the chain rule
/// through `W = W0 + B·A`.
pub fn grad_logprob(params: &PolicyParameters, x: &[TokenId], y: &[TokenId]) -> Result<PolicyGradient, PolicyError> {
    Ok(logprob_and_grad(params, x, y)?.1)
}

pub fn logprob_and_grad(params: &PolicyParameters, x: &[TokenId], y: &[TokenId]) -> Result<(LogProb, PolicyGradient), PolicyError> {
    let w = params.effective_weights();
    let steps = step_log_dists(params, &w, x, y)?;
    let mut g = Array2::<f64>::zeros(w.dim());
    let mut per_token = Vec::with_capacity(y.len());
    for ((f, lp), tok) in steps.iter().zip(y) {
        per_token.push(lp[tok.index()]);
        for v in 0..w.nrows() {
            let coef = if v == tok.index() { 1.0 } else { 0.0 } - lp[v].exp();
            for &(i, xv) in f {
                g[[v, i]] += coef * xv;
            }
        }
    }
    let lp = LogProb {
        total: per_token.iter().sum(),
        per_token,
    };
    Ok((lp, PolicyGradient::from_effective(params, g)))
}

/// Autoregressive draw from `softmax(logits / T)` until `<EOS>` (included
/// in the output) or `max_len` tokens.
pub fn sample(params: &PolicyParameters, x: &[TokenId], cfg: &SampleConfig) -> Result<Vec<TokenId>, PolicyError> {
    cfg.validate()?;
    let mut rng = seeded(cfg.rng_seed);
    sample_with_rng(params, x, cfg.temperature, cfg.max_len, &mut rng)
}

/// As [`sample`], drawing from a caller-owned stream so consecutive
/// samples continue one sequence of random numbers.
pub fn sample_with_rng(params: &PolicyParameters, x: &[TokenId], temperature: f64, max_len: usize, rng: &mut Rng) -> Result<Vec<TokenId>, PolicyError> {
    let fm = params.features();
    let bag = fm.prompt_bag(x)?;
    let w = params.effective_weights();
    let eos = params.vocab().eos();
    let mut y = Vec::new();
    while y.len() < max_len {
        let z = logits(&w, &fm.step_sparse(&bag, &y));
        let tok = if temperature <= GREEDY_THRESHOLD {
            argmax(&z)
        } else {
            let scaled: Vec<f64> = z.iter().map(|l| l / temperature).collect();
            let probs: Vec<f64> = log_softmax(&scaled).iter().map(|l| l.exp()).collect();
            draw(&probs, rng.random::<f64>())
        };
        let tok = TokenId(tok as u16);
        y.push(tok);
        if tok == eos {
            break;
        }
    }
    Ok(y)
}

/// Lowest index among the maxima.
fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

fn draw(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Folds the adapter into the base matrix: `W0' = W0 + B·A`.
pub fn merge_adapter(params: &PolicyParameters) -> Result<PolicyParameters, PolicyError> {
    let ad = params.adapter().ok_or(PolicyError::NoAdapter)?;
    let merged = params.w0() + &ad.delta();
    Ok(PolicyParameters::from_parts(
        params.vocab().clone(),
        params.context(),
        merged,
        None,
        false,
    ))
}

use serde::{Deserialize, Serialize};

use crate::countdown::{verify, CountdownProblem, VerifyOptions};
use crate::policy::{sample_with_rng, PolicyError, PolicyParameters, TokenId, MAX_LEN, MAX_TEMPERATURE};
use crate::reward::RewardParameters;
use crate::rng::seeded;
use crate::tasks::response_text;

/// Deterministic candidate scorer.
#[derive(Debug, Clone, Copy)]
pub enum Critic<'a> {
    /// Exact checker bound to one problem: 1.0 if accepted, else 0.0.
    Verifier { problem: &'a CountdownProblem, options: VerifyOptions },
    /// Raw reward-model score, unnormalized.
    RewardModel(&'a RewardParameters),
}

impl Critic<'_> {
    pub fn score(&self, params: &PolicyParameters, x: &[TokenId], y: &[TokenId]) -> Result<f64, String> {
        match self {
            Critic::Verifier { problem, options } => {
                let text = response_text(params.vocab(), y).map_err(|e| e.to_string())?;
                Ok(if verify(problem, &text, *options).accepted { 1.0 } else { 0.0 })
            }
            Critic::RewardModel(rm) => rm.score(x, y).map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BonConfig {
    pub n: usize,
    /// At or below the greedy threshold every candidate is the argmax decode.
    pub temperature: f64,
    pub rng_seed: u64,
    pub max_len: usize,
}

impl BonConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.n == 0 {
            return Err(PolicyError::InvalidSampleConfig("best-of-N needs n >= 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature <= MAX_TEMPERATURE) {
            return Err(PolicyError::InvalidSampleConfig(format!(
                "temperature {} outside [0, {MAX_TEMPERATURE}]",
                self.temperature
            )));
        }
        if self.max_len == 0 || self.max_len > MAX_LEN {
            return Err(PolicyError::InvalidSampleConfig(format!("max_len {} outside 1..={MAX_LEN}", self.max_len)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub tokens: Vec<TokenId>,
    /// `-inf` when the critic failed on this candidate.
    pub score: f64,
    pub critic_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonOutcome {
    pub selected: usize,
    pub candidates: Vec<Candidate>,
}

impl BonOutcome {
    pub fn selected_candidate(&self) -> &Candidate {
        &self.candidates[self.selected]
    }
}

/// Index of the highest score among the first `n`; earliest wins ties.
pub fn select(candidates: &[Candidate], n: usize) -> usize {
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate().take(n) {
        if c.score > candidates[best].score {
            best = i;
        }
    }
    best
}

pub(crate) fn score_all(params: &PolicyParameters, x: &[TokenId], pool: Vec<Vec<TokenId>>, critic: &Critic<'_>) -> Vec<Candidate> {
    pool.into_iter()
        .map(|tokens| match critic.score(params, x, &tokens) {
            Ok(score) => Candidate {
                tokens,
                score,
                critic_error: None,
            },
            Err(e) => Candidate {
                tokens,
                score: f64::NEG_INFINITY,
                critic_error: Some(e),
            },
        })
        .collect()
}

/// Draws `n` candidates from one seeded stream (so candidate 0 equals a
/// plain sample with the same seed) and keeps the critic's favourite.
pub fn best_of_n(params: &PolicyParameters, x: &[TokenId], cfg: &BonConfig, critic: &Critic<'_>) -> Result<BonOutcome, PolicyError> {
    cfg.validate()?;
    let mut rng = seeded(cfg.rng_seed);
    let pool = (0..cfg.n)
        .map(|_| sample_with_rng(params, x, cfg.temperature, cfg.max_len, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let candidates = score_all(params, x, pool, critic);
    Ok(BonOutcome {
        selected: select(&candidates, cfg.n),
        candidates,
    })
}

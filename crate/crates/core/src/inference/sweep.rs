use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bon::{score_all, select, BonConfig, Candidate, Critic};
use crate::countdown::{verify, CountdownProblem, VerifyOptions};
use crate::policy::{sample_with_rng, PolicyParameters};
use crate::reward::RewardParameters;
use crate::rng::{derive_seed, seeded};
use crate::tasks::{countdown_prompt, response_text};

/// How candidates are ranked. Success is always judged by the verifier.
#[derive(Debug, Clone, Copy)]
pub enum SweepCritic<'a> {
    Verifier,
    RewardModel(&'a RewardParameters),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub ns: Vec<usize>,
    pub temperatures: Vec<f64>,
    pub seed: u64,
    pub max_len: usize,
    pub verify: VerifyOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n: usize,
    pub temperature: f64,
    pub seed: u64,
    pub solve_rate: f64,
    pub solved: usize,
    pub total: usize,
    /// Candidates scored for this cell (`n` per problem whose pool was drawn).
    pub candidates: usize,
    /// Problems whose pool could not be generated; counted as unsolved.
    pub errors: usize,
}

/// One drawn pool: `max(ns)` candidates for one (problem, temperature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub problem: usize,
    pub temperature: f64,
    pub seed: u64,
    pub candidates: Vec<Candidate>,
    /// Verifier verdict of each candidate, independent of the ranking critic.
    pub accepted: Vec<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    /// Ordered by temperature, then N as listed in the config.
    pub cells: Vec<SweepCell>,
    /// Ordered by (temperature index, problem index).
    pub pools: Vec<PoolRecord>,
}

impl SweepGrid {
    pub fn cell(&self, n: usize, temperature: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.n == n && c.temperature == temperature)
    }
}

fn draw_pool(params: &PolicyParameters, problem: &CountdownProblem, p: usize, temperature: f64, seed: u64, n: usize, cfg: &SweepConfig, critic: SweepCritic<'_>) -> PoolRecord {
    let x = countdown_prompt(params.vocab(), problem);
    let mut rng = seeded(seed);
    let mut record = PoolRecord {
        problem: p,
        temperature,
        seed,
        candidates: vec![],
        accepted: vec![],
        error: None,
    };
    let pool = match (0..n)
        .map(|_| sample_with_rng(params, &x, temperature, cfg.max_len, &mut rng))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(pool) => pool,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    let critic = match critic {
        SweepCritic::Verifier => Critic::Verifier {
            problem,
            options: cfg.verify,
        },
        SweepCritic::RewardModel(rm) => Critic::RewardModel(rm),
    };
    record.candidates = score_all(params, &x, pool, &critic);
    record.accepted = record
        .candidates
        .iter()
        .map(|c| response_text(params.vocab(), &c.tokens).is_ok_and(|t| verify(problem, &t, cfg.verify).accepted))
        .collect();
    record
}

/// Solve rate for every (N, T). Each (problem, T) draws `max(ns)`
/// candidates once from seed `derive(seed, [problem, t_index])`; smaller N
/// select within the pool prefix, so with the verifier critic the
/// per-problem outcome can only improve as N grows.
pub fn sweep(params: &PolicyParameters, problems: &[CountdownProblem], cfg: &SweepConfig, critic: SweepCritic<'_>) -> Result<SweepGrid, crate::policy::PolicyError> {
    let max_n = cfg.ns.iter().copied().max().unwrap_or(0);
    for &t in &cfg.temperatures {
        BonConfig {
            n: max_n,
            temperature: t,
            rng_seed: cfg.seed,
            max_len: cfg.max_len,
        }
        .validate()?;
    }
    if cfg.ns.contains(&0) {
        return Err(crate::policy::PolicyError::InvalidSampleConfig("N must be >= 1".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..cfg.temperatures.len())
        .flat_map(|t| (0..problems.len()).map(move |p| (t, p)))
        .collect();
    let pools: Vec<PoolRecord> = jobs
        .par_iter()
        .map(|&(t, p)| {
            let seed = derive_seed(cfg.seed, &[p as u64, t as u64]);
            draw_pool(params, &problems[p], p, cfg.temperatures[t], seed, max_n, cfg, critic)
        })
        .collect();
    let mut cells = Vec::with_capacity(cfg.ns.len() * cfg.temperatures.len());
    for (t, &temperature) in cfg.temperatures.iter().enumerate() {
        let column = &pools[t * problems.len()..(t + 1) * problems.len()];
        for &n in &cfg.ns {
            let (mut solved, mut errors, mut candidates) = (0, 0, 0);
            for pool in column {
                if pool.error.is_some() {
                    errors += 1;
                    continue;
                }
                candidates += n;
                if pool.accepted[select(&pool.candidates, n)] {
                    solved += 1;
                }
            }
            let total = column.len();
            cells.push(SweepCell {
                n,
                temperature,
                seed: cfg.seed,
                solve_rate: if total == 0 { 0.0 } else { solved as f64 / total as f64 },
                solved,
                total,
                candidates,
                errors,
            });
        }
    }
    Ok(SweepGrid { cells, pools })
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::countdown::{verify, CountdownProblem, VerdictReason, VerifyOptions};
use crate::inference::{best_of_n, select, BonConfig, Critic, SweepCell, SweepGrid};
use crate::policy::{sample_with_rng, PolicyError, PolicyParameters, TokenId, Vocabulary};
use crate::rng::{derive_seed, seeded};
use crate::tasks::{countdown_prompt, response_text};

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    /// Successes, with ties counted as one half.
    pub successes: f64,
    pub count: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    pub config_hash: String,
}

/// Wilson score interval for a proportion.
pub fn wilson_interval(p: f64, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn report(metric: &str, value: f64, successes: f64, count: usize, config_hash: &str) -> EvalReport {
    let (ci_low, ci_high) = wilson_interval(value, count, WILSON_Z);
    EvalReport {
        metric: metric.to_string(),
        value,
        successes,
        count,
        ci_low,
        ci_high,
        config_hash: config_hash.to_string(),
    }
}

/// Greedy decoding expressed as a one-candidate pool.
pub fn greedy(max_len: usize) -> BonConfig {
    BonConfig {
        n: 1,
        temperature: 0.0,
        rng_seed: 0,
        max_len,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub problem: usize,
    pub text: String,
    pub reason: VerdictReason,
    pub accepted: bool,
    pub candidates: usize,
}

/// Solve rate of the selected output per problem. Problem `i` draws its
/// pool from seed `derive(cfg.rng_seed, [i])`; the verifier picks the
/// candidate and judges it.
pub fn evaluate_accuracy(params: &PolicyParameters, problems: &[CountdownProblem], cfg: &BonConfig, options: VerifyOptions, config_hash: &str) -> Result<(EvalReport, Vec<VerdictRecord>), PolicyError> {
    cfg.validate()?;
    let records: Vec<VerdictRecord> = problems
        .par_iter()
        .enumerate()
        .map(|(i, problem)| {
            let x = countdown_prompt(params.vocab(), problem);
            let bon = BonConfig {
                rng_seed: derive_seed(cfg.rng_seed, &[i as u64]),
                ..*cfg
            };
            let critic = Critic::Verifier { problem, options };
            let text = best_of_n(params, &x, &bon, &critic)
                .ok()
                .and_then(|out| response_text(params.vocab(), &out.selected_candidate().tokens).ok())
                .unwrap_or_default();
            let verdict = verify(problem, &text, options);
            VerdictRecord {
                problem: i,
                text,
                reason: verdict.reason,
                accepted: verdict.accepted,
                candidates: cfg.n,
            }
        })
        .collect();
    let (solved, count) = recount_accuracy(&records);
    let value = if count == 0 { 0.0 } else { solved as f64 / count as f64 };
    Ok((report("solve_rate", value, solved as f64, count, config_hash), records))
}

pub fn recount_accuracy(records: &[VerdictRecord]) -> (usize, usize) {
    (records.iter().filter(|r| r.accepted).count(), records.len())
}

/// Decoding shared by both policies in a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub temperature: f64,
    pub max_len: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRecord {
    pub prompt: usize,
    pub response_a: Vec<TokenId>,
    pub response_b: Vec<TokenId>,
    /// `None` when the judge failed on that response; it then loses to any
    /// scored response.
    pub score_a: Option<f64>,
    pub score_b: Option<f64>,
    /// 1 if a wins, 0.5 for a tie, 0 if b wins.
    pub outcome: f64,
}

/// Judge scoring `(prompt index, prompt, response)`.
pub type Judge<'a> = dyn Fn(usize, &[TokenId], &[TokenId]) -> Result<f64, String> + Sync + 'a;

fn outcome(a: Option<f64>, b: Option<f64>) -> f64 {
    let rank = |s: Option<f64>| s.unwrap_or(f64::NEG_INFINITY);
    let (a, b) = (rank(a), rank(b));
    if a > b {
        1.0
    } else if a < b {
        0.0
    } else {
        0.5
    }
}

/// Share of prompts on which `a`'s response outscores `b`'s, ties half.
/// Both policies decode prompt `i` from the same seed. Reported as
/// `(2·wins + ties) / (2·n)`, so swapping `a` and `b` gives exactly
/// `1 − value`.
pub fn winrate(a: &PolicyParameters, b: &PolicyParameters, prompts: &[Vec<TokenId>], judge: &Judge<'_>, decode: &DecodeConfig, config_hash: &str) -> Result<(EvalReport, Vec<WinRecord>), PolicyError> {
    let records = prompts
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let seed = derive_seed(decode.seed, &[i as u64]);
            let ya = sample_with_rng(a, x, decode.temperature, decode.max_len, &mut seeded(seed))?;
            let yb = sample_with_rng(b, x, decode.temperature, decode.max_len, &mut seeded(seed))?;
            let score_a = judge(i, x, &ya).ok().filter(|s| !s.is_nan());
            let score_b = judge(i, x, &yb).ok().filter(|s| !s.is_nan());
            Ok(WinRecord {
                prompt: i,
                response_a: ya,
                response_b: yb,
                score_a,
                score_b,
                outcome: outcome(score_a, score_b),
            })
        })
        .collect::<Result<Vec<_>, PolicyError>>()?;
    let (value, successes) = recount_winrate(&records);
    Ok((report("winrate", value, successes, records.len(), config_hash), records))
}

/// `(value, wins + ties/2)` from raw outcomes.
pub fn recount_winrate(records: &[WinRecord]) -> (f64, f64) {
    let wins = records.iter().filter(|r| r.outcome == 1.0).count();
    let ties = records.iter().filter(|r| r.outcome == 0.5).count();
    let n = records.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    ((2 * wins + ties) as f64 / (2 * n) as f64, wins as f64 + 0.5 * ties as f64)
}

/// Monte-Carlo mean of the judge over `per_prompt` samples per prompt.
pub fn expected_reward(params: &PolicyParameters, prompts: &[Vec<TokenId>], judge: &Judge<'_>, per_prompt: usize, decode: &DecodeConfig) -> Result<f64, PolicyError> {
    let sums = prompts
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = seeded(derive_seed(decode.seed, &[i as u64]));
            let mut total = 0.0;
            for _ in 0..per_prompt {
                let y = sample_with_rng(params, x, decode.temperature, decode.max_len, &mut rng)?;
                total += judge(i, x, &y).unwrap_or(0.0);
            }
            Ok(total)
        })
        .collect::<Result<Vec<f64>, PolicyError>>()?;
    let n = (prompts.len() * per_prompt).max(1);
    Ok(sums.iter().sum::<f64>() / n as f64)
}

/// Recomputes a report's value from its raw records; exact comparison.
pub fn audit_accuracy(report: &EvalReport, records: &[VerdictRecord]) -> Result<(), String> {
    let (solved, count) = recount_accuracy(records);
    let value = if count == 0 { 0.0 } else { solved as f64 / count as f64 };
    if count != report.count || solved as f64 != report.successes || value.to_bits() != report.value.to_bits() {
        return Err(format!(
            "report says {} ({} successes) over {}, records give {value} ({solved}) over {count}",
            report.value, report.successes, report.count
        ));
    }
    Ok(())
}

pub fn audit_winrate(report: &EvalReport, records: &[WinRecord]) -> Result<(), String> {
    for r in records {
        if r.outcome != outcome(r.score_a, r.score_b) {
            return Err(format!("prompt {}: outcome {} disagrees with scores", r.prompt, r.outcome));
        }
    }
    let (value, successes) = recount_winrate(records);
    if records.len() != report.count || successes != report.successes || value.to_bits() != report.value.to_bits() {
        return Err(format!("report says {} over {}, records give {value} over {}", report.value, report.count, records.len()));
    }
    Ok(())
}

/// One sweep candidate, for the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub problem: usize,
    pub temperature: f64,
    pub index: usize,
    pub text: String,
    /// `None` when the critic failed on this candidate.
    pub score: Option<f64>,
    pub accepted: bool,
    /// Pool sizes N for which this candidate is the selection.
    pub selected_for: Vec<usize>,
}

pub fn candidate_records(grid: &SweepGrid, ns: &[usize], vocab: &Vocabulary) -> Vec<CandidateRecord> {
    let mut out = Vec::new();
    for pool in &grid.pools {
        for (i, c) in pool.candidates.iter().enumerate() {
            out.push(CandidateRecord {
                problem: pool.problem,
                temperature: pool.temperature,
                index: i,
                text: response_text(vocab, &c.tokens).unwrap_or_default(),
                score: Some(c.score).filter(|s| s.is_finite()),
                accepted: pool.accepted[i],
                selected_for: ns.iter().copied().filter(|&n| select(&pool.candidates, n) == i).collect(),
            });
        }
    }
    out
}

/// Recomputes every cell's solve count from the candidate log.
pub fn audit_sweep(cells: &[SweepCell], records: &[CandidateRecord]) -> Result<(), String> {
    for cell in cells {
        let mut solved = 0;
        let mut problems = std::collections::BTreeSet::new();
        for r in records.iter().filter(|r| r.temperature == cell.temperature) {
            problems.insert(r.problem);
        }
        for &p in &problems {
            let mut pool: Vec<&CandidateRecord> = records
                .iter()
                .filter(|r| r.temperature == cell.temperature && r.problem == p)
                .collect();
            pool.sort_by_key(|r| r.index);
            let mut best = 0;
            for (i, r) in pool.iter().enumerate().take(cell.n) {
                if r.score.unwrap_or(f64::NEG_INFINITY) > pool[best].score.unwrap_or(f64::NEG_INFINITY) {
                    best = i;
                }
            }
            if pool.get(best).is_some_and(|r| r.accepted) {
                solved += 1;
            }
        }
        if solved != cell.solved {
            return Err(format!("cell N={} T={}: log gives {solved} solved, grid says {}", cell.n, cell.temperature, cell.solved));
        }
    }
    Ok(())
}

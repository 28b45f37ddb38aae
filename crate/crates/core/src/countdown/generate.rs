//! Solvability-guaranteed problem generator.
//!
//! Each problem is built backwards: draw the numbers, combine them into a
//! random expression tree, and take its value as the target. Draws that
//! divide inexactly, pass through a negative or zero value, or repeat a
//! (multiset, target) pair already emitted are rejected.

use std::collections::HashSet;
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::{apply, Expression, Op};
use super::verify::CountdownProblem;
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperandCount {
    Three,
    Four,
    Mixed,
}

impl std::str::FromStr for OperandCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "3" | "three" => Ok(OperandCount::Three),
            "4" | "four" => Ok(OperandCount::Four),
            "mixed" => Ok(OperandCount::Mixed),
            other => Err(format!("operand count must be 3, 4 or mixed, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub count: usize,
    pub operands: OperandCount,
    pub value_range: RangeInclusive<u64>,
    pub seed: u64,
    /// Rejection-sampling budget per requested problem.
    pub attempts_per_problem: usize,
}

impl GeneratorConfig {
    pub fn new(count: usize, operands: OperandCount, value_range: RangeInclusive<u64>, seed: u64) -> Self {
        GeneratorConfig {
            count,
            operands,
            value_range,
            seed,
            attempts_per_problem: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerateError {
    #[error("count must be at least 1")]
    EmptyRequest,
    #[error("value range {lo}..={hi} must lie within 1..=100")]
    BadRange { lo: u64, hi: u64 },
    #[error("generation exhausted after {attempts} attempts with {produced} of {requested} problems")]
    Exhausted {
        attempts: usize,
        produced: usize,
        requested: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedProblem {
    pub problem: CountdownProblem,
    pub solution: Expression,
}

pub fn generate_problems(cfg: &GeneratorConfig) -> Result<Vec<GeneratedProblem>, GenerateError> {
    if cfg.count == 0 {
        return Err(GenerateError::EmptyRequest);
    }
    let (lo, hi) = (*cfg.value_range.start(), *cfg.value_range.end());
    if lo < 1 || hi > 100 || lo > hi {
        return Err(GenerateError::BadRange { lo, hi });
    }
    let mut rng = seeded(cfg.seed);
    let budget = cfg.attempts_per_problem.saturating_mul(cfg.count);
    let mut seen: HashSet<(Vec<u64>, u64)> = HashSet::new();
    let mut out = Vec::with_capacity(cfg.count);
    let mut attempts = 0;
    while out.len() < cfg.count {
        if attempts >= budget {
            return Err(GenerateError::Exhausted {
                attempts,
                produced: out.len(),
                requested: cfg.count,
            });
        }
        attempts += 1;
        let k = match cfg.operands {
            OperandCount::Three => 3,
            OperandCount::Four => 4,
            OperandCount::Mixed => rng.random_range(3..=4),
        };
        let numbers: Vec<u64> = (0..k).map(|_| rng.random_range(lo..=hi)).collect();
        let Some((solution, target)) = random_expression(&numbers, &mut rng) else {
            continue;
        };
        let mut key = numbers.clone();
        key.sort_unstable();
        if !seen.insert((key, target)) {
            continue;
        }
        let problem = CountdownProblem::new(numbers, target)
            .expect("generator draws 3..=4 positive numbers and a positive target");
        out.push(GeneratedProblem { problem, solution });
    }
    Ok(out)
}

/// Combines the numbers in a random tree. Returns `None` when the draw
/// leaves the positive integers.
fn random_expression(numbers: &[u64], rng: &mut Rng) -> Option<(Expression, u64)> {
    let mut pool: Vec<(i64, Expression)> = numbers
        .iter()
        .map(|&n| (n as i64, Expression::Num(n)))
        .collect();
    pool.shuffle(rng);
    while pool.len() > 1 {
        let i = rng.random_range(0..pool.len());
        let (a, ea) = pool.swap_remove(i);
        let j = rng.random_range(0..pool.len());
        let (b, eb) = pool.swap_remove(j);
        let op = Op::ALL[rng.random_range(0..4)];
        let value = apply(op, a, b).ok()?;
        if value <= 0 {
            return None;
        }
        let slot = rng.random_range(0..=pool.len());
        pool.insert(slot, (value, Expression::binary(op, ea, eb)));
    }
    let (value, expr) = pool.pop()?;
    Some((expr, value as u64))
}

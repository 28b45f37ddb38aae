use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::{EvalError, EvalMode};
use super::parser::{extract_last_expression, parse_expression};

/// Largest operand count a problem may carry.
pub const MAX_OPERANDS: usize = 4;
/// Smallest operand count a problem may carry.
pub const MIN_OPERANDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProblemError {
    #[error("problem must have {MIN_OPERANDS}..={MAX_OPERANDS} numbers, got {0}")]
    OperandCount(usize),
    #[error("numbers must be positive")]
    NonPositiveNumber,
    #[error("target must be positive")]
    NonPositiveTarget,
}

/// A Countdown instance: combine every number exactly once to hit `target`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawProblem")]
pub struct CountdownProblem {
    numbers: Vec<u64>,
    target: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    numbers: Vec<u64>,
    target: u64,
}

impl TryFrom<RawProblem> for CountdownProblem {
    type Error = ProblemError;

    fn try_from(raw: RawProblem) -> Result<Self, ProblemError> {
        CountdownProblem::new(raw.numbers, raw.target)
    }
}

impl CountdownProblem {
    pub fn new(numbers: Vec<u64>, target: u64) -> Result<Self, ProblemError> {
        if !(MIN_OPERANDS..=MAX_OPERANDS).contains(&numbers.len()) {
            return Err(ProblemError::OperandCount(numbers.len()));
        }
        if numbers.contains(&0) {
            return Err(ProblemError::NonPositiveNumber);
        }
        if target == 0 {
            return Err(ProblemError::NonPositiveTarget);
        }
        Ok(CountdownProblem { numbers, target })
    }

    pub fn numbers(&self) -> &[u64] {
        &self.numbers
    }

    pub fn target(&self) -> u64 {
        self.target
    }

    /// Numbers sorted ascending; the multiset identity of the problem.
    pub fn sorted_numbers(&self) -> Vec<u64> {
        let mut v = self.numbers.clone();
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictReason {
    Ok,
    ParseError,
    WrongValue,
    NumberMisuse,
    InexactDivision,
    DivByZero,
    NegativeIntermediate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub accepted: bool,
    pub reason: VerdictReason,
}

impl Verdict {
    fn from_reason(reason: VerdictReason) -> Self {
        Verdict {
            accepted: reason == VerdictReason::Ok,
            reason,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Reject candidates with any negative intermediate value.
    pub strict: bool,
    /// Pull the last well-formed expression out of surrounding text instead
    /// of requiring a bare expression.
    pub lenient: bool,
}

/// Exact-match check of a candidate answer.
///
/// Order of checks: parse, operand multiset, exact evaluation, target
/// equality. Never fails; every outcome is a [`Verdict`].
pub fn verify(problem: &CountdownProblem, candidate: &str, opts: VerifyOptions) -> Verdict {
    let expr = if opts.lenient {
        match extract_last_expression(candidate) {
            Some(e) => e,
            None => return Verdict::from_reason(VerdictReason::ParseError),
        }
    } else {
        match parse_expression(candidate) {
            Ok(e) => e,
            Err(_) => return Verdict::from_reason(VerdictReason::ParseError),
        }
    };
    let mut leaves = expr.leaves();
    leaves.sort_unstable();
    if leaves != problem.sorted_numbers() {
        return Verdict::from_reason(VerdictReason::NumberMisuse);
    }
    let reason = match expr.evaluate(EvalMode {
        strict: opts.strict,
    }) {
        Ok(v) if u64::try_from(v).ok() == Some(problem.target()) => VerdictReason::Ok,
        Ok(_) => VerdictReason::WrongValue,
        Err(EvalError::InexactDivision) => VerdictReason::InexactDivision,
        Err(EvalError::DivByZero) => VerdictReason::DivByZero,
        Err(EvalError::NegativeIntermediate) => VerdictReason::NegativeIntermediate,
        // an overflowing value cannot equal an in-range target
        Err(EvalError::Overflow) => VerdictReason::WrongValue,
    };
    Verdict::from_reason(reason)
}

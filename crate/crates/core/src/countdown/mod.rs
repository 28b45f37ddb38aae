//! The Countdown arithmetic task: grammar, exact evaluation, the exact-match
//! verifier, a brute-force solver and a problem generator.

mod expr;
mod generate;
mod parser;
mod solver;
mod verify;

pub use expr::{apply, EvalError, EvalMode, Expression, Op};
pub use generate::{generate_problems, GenerateError, GeneratedProblem, GeneratorConfig, OperandCount};
pub use parser::{extract_last_expression, parse_expression, ParseError};
pub use solver::solve;
pub use verify::{
    verify, CountdownProblem, ProblemError, Verdict, VerdictReason, VerifyOptions, MAX_OPERANDS,
    MIN_OPERANDS,
};

use std::fmt;

use thiserror::Error;

/// Binary arithmetic operator of the Countdown grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

    pub fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            Op::Add | Op::Sub => 1,
            Op::Mul | Op::Div => 2,
        }
    }
}

/// Arithmetic AST over unsigned integer literals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expression {
    Num(u64),
    Binary(Op, Box<Expression>, Box<Expression>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("inexact division")]
    InexactDivision,
    #[error("division by zero")]
    DivByZero,
    #[error("negative intermediate value")]
    NegativeIntermediate,
    #[error("integer overflow")]
    Overflow,
}

/// Evaluation semantics. Negative intermediates are legal unless `strict` is set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalMode {
    pub strict: bool,
}

impl EvalMode {
    pub const LENIENT: EvalMode = EvalMode { strict: false };
    pub const STRICT: EvalMode = EvalMode { strict: true };
}

impl Expression {
    pub fn num(value: u64) -> Self {
        Expression::Num(value)
    }

    pub fn binary(op: Op, left: Expression, right: Expression) -> Self {
        Expression::Binary(op, Box::new(left), Box::new(right))
    }

    /// Leaf literals in left-to-right order.
    pub fn leaves(&self) -> Vec<u64> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<u64>) {
        match self {
            Expression::Num(n) => out.push(*n),
            Expression::Binary(_, l, r) => {
                l.collect_leaves(out);
                r.collect_leaves(out);
            }
        }
    }

    pub fn operand_count(&self) -> usize {
        match self {
            Expression::Num(_) => 1,
            Expression::Binary(_, l, r) => l.operand_count() + r.operand_count(),
        }
    }

    /// Exact integer evaluation. Division must leave no remainder.
    pub fn evaluate(&self, mode: EvalMode) -> Result<i64, EvalError> {
        let value = match self {
            Expression::Num(n) => i64::try_from(*n).map_err(|_| EvalError::Overflow)?,
            Expression::Binary(op, l, r) => {
                let a = l.evaluate(mode)?;
                let b = r.evaluate(mode)?;
                apply(*op, a, b)?
            }
        };
        if mode.strict && value < 0 {
            return Err(EvalError::NegativeIntermediate);
        }
        Ok(value)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expression::Num(_) => u8::MAX,
            Expression::Binary(op, _, _) => op.precedence(),
        }
    }
}

/// Applies one operator with exact integer semantics.
pub fn apply(op: Op, a: i64, b: i64) -> Result<i64, EvalError> {
    match op {
        Op::Add => a.checked_add(b).ok_or(EvalError::Overflow),
        Op::Sub => a.checked_sub(b).ok_or(EvalError::Overflow),
        Op::Mul => a.checked_mul(b).ok_or(EvalError::Overflow),
        Op::Div => {
            if b == 0 {
                Err(EvalError::DivByZero)
            } else if a.checked_rem(b).ok_or(EvalError::Overflow)? != 0 {
                Err(EvalError::InexactDivision)
            } else {
                a.checked_div(b).ok_or(EvalError::Overflow)
            }
        }
    }
}

/// Prints with the minimal parentheses that reparse to the same tree: a left
/// operand is wrapped only when it binds looser than its parent, a right
/// operand whenever it binds no tighter (the grammar is left-associative).
impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expression::Num(n) => write!(f, "{n}"),
            Expression::Binary(op, l, r) => {
                let p = op.precedence();
                if l.precedence() < p {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, "{}", op.symbol())?;
                if r.precedence() <= p {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
        }
    }
}

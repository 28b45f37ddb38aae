//! Recursive-descent parser for the Countdown expression grammar:
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := uint | "(" expr ")"
//! uint   := [0-9]+
//! ```
//!
//! ASCII whitespace may appear between tokens. Operators are left-associative.

use thiserror::Error;

use super::expr::{Expression, Op};

const MAX_DEPTH: usize = 128;
const MAX_LENIENT_RUN: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    fn new(offset: usize, message: impl Into<String>) -> Self {
        ParseError {
            offset,
            message: message.into(),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expression, ParseError> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => Op::Add,
                Some(b'-') => Op::Sub,
                _ => return Ok(left),
            };
            self.pos += 1;
            let right = self.term()?;
            left = Expression::binary(op, left, right);
        }
    }

    fn term(&mut self) -> Result<Expression, ParseError> {
        let mut left = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => Op::Mul,
                Some(b'/') => Op::Div,
                _ => return Ok(left),
            };
            self.pos += 1;
            let right = self.factor()?;
            left = Expression::binary(op, left, right);
        }
    }

    fn factor(&mut self) -> Result<Expression, ParseError> {
        match self.peek() {
            Some(b'(') => {
                let open = self.pos;
                self.depth += 1;
                if self.depth > MAX_DEPTH {
                    return Err(ParseError::new(open, "nesting too deep"));
                }
                self.pos += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some(b')') => {
                        self.pos += 1;
                        self.depth -= 1;
                        Ok(inner)
                    }
                    Some(_) => Err(ParseError::new(self.pos, "expected ')'")),
                    None => Err(ParseError::new(self.pos, "unclosed '('")),
                }
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                // the slice is ASCII digits, so utf8 conversion cannot fail
                let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
                digits
                    .parse::<u64>()
                    .map(Expression::Num)
                    .map_err(|_| ParseError::new(start, "integer literal out of range"))
            }
            Some(_) => Err(ParseError::new(self.pos, "expected number or '('")),
            None => Err(ParseError::new(self.pos, "unexpected end of input")),
        }
    }
}

/// Parses a bare infix expression; any trailing text is an error.
pub fn parse_expression(text: &str) -> Result<Expression, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        depth: 0,
    };
    let e = p.expr()?;
    match p.peek() {
        None => Ok(e),
        Some(_) => Err(ParseError::new(p.pos, "unexpected trailing input")),
    }
}

fn in_alphabet(c: char) -> bool {
    c.is_ascii_digit() || matches!(c, '+' | '-' | '*' | '/' | '(' | ')') || c.is_ascii_whitespace()
}

/// Lenient extraction: returns the last well-formed expression embedded in
/// free text: the parseable span ending furthest right, longest first.
pub fn extract_last_expression(text: &str) -> Option<Expression> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (in_alphabet(c), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, text.len()));
    }
    for &(s, e) in runs.iter().rev() {
        let run = &text[s..e];
        if run.trim().is_empty() || run.len() > MAX_LENIENT_RUN {
            continue;
        }
        for end in (1..=run.len()).rev() {
            for start in 0..end {
                let candidate = run[start..end].trim();
                if candidate.is_empty() {
                    break;
                }
                if let Ok(expr) = parse_expression(candidate) {
                    return Some(expr);
                }
            }
        }
    }
    None
}

//! Line-delimited JSON datasets.
//!
//! Problems: `{"numbers":[2,3,7],"target":13,"solution":"7+3*2"}`, with
//! `solution` optional. Preference pairs:
//! `{"prompt":"<NUMS>1 2 3<SEP>","chosen":"123<EOS>","rejected":"9<EOS>"}`,
//! token strings over the vocabulary. Unknown or missing fields are errors
//! that name the line (1-based) and the field.

use std::fmt::Write as _;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::countdown::{parse_expression, verify, CountdownProblem, Expression, GeneratedProblem, VerifyOptions};
use crate::policy::Vocabulary;
use crate::reward::PreferencePair;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}{}: {message}", field.as_ref().map(|f| format!(", field `{f}`")).unwrap_or_default())]
pub struct DataError {
    pub line: usize,
    pub field: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemRecord {
    pub problem: CountdownProblem,
    pub solution: Option<Expression>,
}

impl From<&GeneratedProblem> for ProblemRecord {
    fn from(g: &GeneratedProblem) -> Self {
        ProblemRecord {
            problem: g.problem.clone(),
            solution: Some(g.solution.clone()),
        }
    }
}

fn err(line: usize, field: Option<&str>, message: impl Into<String>) -> DataError {
    DataError {
        line,
        field: field.map(str::to_string),
        message: message.into(),
    }
}

/// Non-blank lines as JSON objects with only the allowed keys.
fn objects<'a>(text: &'a str, allowed: &'a [&'a str]) -> impl Iterator<Item = Result<(usize, Map<String, Value>), DataError>> + 'a {
    text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).map(move |(i, l)| {
        let line = i + 1;
        let obj = match serde_json::from_str::<Value>(l) {
            Ok(Value::Object(o)) => o,
            Ok(_) => return Err(err(line, None, "expected a JSON object")),
            Err(e) => return Err(err(line, None, e.to_string())),
        };
        if let Some(k) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(err(line, Some(k), "unknown field"));
        }
        Ok((line, obj))
    })
}

fn required<'a>(obj: &'a Map<String, Value>, line: usize, field: &str) -> Result<&'a Value, DataError> {
    obj.get(field).ok_or_else(|| err(line, Some(field), "missing field"))
}

fn as_str<'a>(v: &'a Value, line: usize, field: &str) -> Result<&'a str, DataError> {
    v.as_str().ok_or_else(|| err(line, Some(field), "expected a string"))
}

pub fn write_problems(records: &[ProblemRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let mut obj = Map::new();
        obj.insert("numbers".into(), r.problem.numbers().into());
        obj.insert("target".into(), r.problem.target().into());
        if let Some(s) = &r.solution {
            obj.insert("solution".into(), s.to_string().into());
        }
        let _ = writeln!(out, "{}", Value::Object(obj));
    }
    out
}

/// Parses and validates problems; a given solution must verify.
pub fn read_problems(text: &str) -> Result<Vec<ProblemRecord>, DataError> {
    objects(text, &["numbers", "target", "solution"])
        .map(|item| {
            let (line, obj) = item?;
            let numbers = required(&obj, line, "numbers")?
                .as_array()
                .and_then(|a| a.iter().map(Value::as_u64).collect::<Option<Vec<u64>>>())
                .ok_or_else(|| err(line, Some("numbers"), "expected an array of non-negative integers"))?;
            let target = required(&obj, line, "target")?
                .as_u64()
                .ok_or_else(|| err(line, Some("target"), "expected a non-negative integer"))?;
            let problem = CountdownProblem::new(numbers, target).map_err(|e| {
                let field = if matches!(e, crate::countdown::ProblemError::NonPositiveTarget) { "target" } else { "numbers" };
                err(line, Some(field), e.to_string())
            })?;
            let solution = match obj.get("solution") {
                None | Some(Value::Null) => None,
                Some(v) => {
                    let text = as_str(v, line, "solution")?;
                    let expr = parse_expression(text).map_err(|e| err(line, Some("solution"), e.to_string()))?;
                    let verdict = verify(&problem, text, VerifyOptions::default());
                    if !verdict.accepted {
                        return Err(err(line, Some("solution"), format!("does not verify: {:?}", verdict.reason)));
                    }
                    Some(expr)
                }
            };
            Ok(ProblemRecord { problem, solution })
        })
        .collect()
}

pub fn write_pairs(vocab: &Vocabulary, pairs: &[PreferencePair]) -> Result<String, crate::policy::VocabError> {
    let mut out = String::new();
    for p in pairs {
        let obj = serde_json::json!({
            "prompt": vocab.decode(&p.prompt)?,
            "chosen": vocab.decode(&p.chosen)?,
            "rejected": vocab.decode(&p.rejected)?,
        });
        let _ = writeln!(out, "{obj}");
    }
    Ok(out)
}

pub fn read_pairs(vocab: &Vocabulary, text: &str) -> Result<Vec<PreferencePair>, DataError> {
    objects(text, &["prompt", "chosen", "rejected"])
        .map(|item| {
            let (line, obj) = item?;
            let tokens = |field: &str| -> Result<_, DataError> {
                let s = as_str(required(&obj, line, field)?, line, field)?;
                vocab.encode(s).map_err(|e| err(line, Some(field), e.to_string()))
            };
            Ok(PreferencePair {
                prompt: tokens("prompt")?,
                chosen: tokens("chosen")?,
                rejected: tokens("rejected")?,
            })
        })
        .collect()
}

/// Serializes records one JSON object per line.
pub fn write_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"));
    }
    out
}

pub fn read_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, DataError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| err(i + 1, None, e.to_string())))
        .collect()
}

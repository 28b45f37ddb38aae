//! Text checkpoint for [`PolicyParameters`].
//!
//! ```text
//! alignlab-policy v1
//! vocab_size <V>
//! feature_dim <D>
//! context <m>
//! rank <r>                 # 0 when no adapter
//! frozen_base <0|1>
//! vocab_hash <16 hex digits>
//! tokens <JSON array of token names>
//! [w0]                     # V lines of D values
//! [adapter.a]              # r lines of D values, only when r > 0
//! [adapter.b]              # V lines of r values, only when r > 0
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! `load(save(p)) == p` bit for bit.

use std::fmt::Write as _;
use std::sync::Arc;

use ndarray::Array2;
use thiserror::Error;

use super::params::{LowRankAdapter, PolicyParameters};
use super::vocab::Vocabulary;

const MAGIC: &str = "alignlab-policy v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("vocabulary hash mismatch: header {header}, tokens hash to {actual}")]
    VocabHash { header: String, actual: String },
}

fn write_matrix(out: &mut String, name: &str, m: &Array2<f64>) {
    let _ = writeln!(out, "[{name}]");
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

pub fn save_policy(p: &PolicyParameters) -> String {
    let mut out = String::new();
    let vocab = p.vocab();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "vocab_size {}", vocab.len());
    let _ = writeln!(out, "feature_dim {}", p.dim());
    let _ = writeln!(out, "context {}", p.context());
    let _ = writeln!(out, "rank {}", p.rank());
    let _ = writeln!(out, "frozen_base {}", u8::from(p.frozen_base()));
    let _ = writeln!(out, "vocab_hash {}", vocab.hash());
    let tokens = serde_json::to_string(vocab.tokens()).expect("strings serialize");
    let _ = writeln!(out, "tokens {tokens}");
    write_matrix(&mut out, "w0", p.w0());
    if let Some(ad) = p.adapter() {
        write_matrix(&mut out, "adapter.a", &ad.a);
        write_matrix(&mut out, "adapter.b", &ad.b);
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str, CheckpointError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, message: impl Into<String>) -> CheckpointError {
        CheckpointError::Format {
            line: self.last,
            message: message.into(),
        }
    }

    fn field(&mut self, key: &str) -> Result<&'a str, CheckpointError> {
        let line = self.next_line()?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| self.err(format!("expected field {key:?}")))
    }

    fn usize_field(&mut self, key: &str) -> Result<usize, CheckpointError> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.err(format!("{key} is not an integer: {v:?}")))
    }

    fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>, CheckpointError> {
        if self.next_line()? != format!("[{name}]") {
            return Err(self.err(format!("expected section [{name}]")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = self.next_line()?;
            let before = data.len();
            for tok in line.split_ascii_whitespace() {
                data.push(tok.parse::<f64>().map_err(|_| self.err(format!("bad value {tok:?}")))?);
            }
            if data.len() - before != cols {
                return Err(self.err(format!("expected {cols} values, got {}", data.len() - before)));
            }
        }
        Array2::from_shape_vec((rows, cols), data).map_err(|e| self.err(e.to_string()))
    }
}

pub fn load_policy(text: &str) -> Result<PolicyParameters, CheckpointError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    if lines.next_line()? != MAGIC {
        return Err(lines.err(format!("expected header {MAGIC:?}")));
    }
    let vocab_size = lines.usize_field("vocab_size")?;
    let dim = lines.usize_field("feature_dim")?;
    let context = lines.usize_field("context")?;
    let rank = lines.usize_field("rank")?;
    let frozen = match lines.field("frozen_base")? {
        "0" => false,
        "1" => true,
        other => return Err(lines.err(format!("frozen_base must be 0 or 1, got {other:?}"))),
    };
    let header_hash = lines.field("vocab_hash")?.to_string();
    let tokens: Vec<String> =
        serde_json::from_str(lines.field("tokens")?).map_err(|e| lines.err(format!("tokens: {e}")))?;
    let vocab = Vocabulary::new(tokens).map_err(|e| lines.err(e.to_string()))?;
    if vocab.hash() != header_hash {
        return Err(CheckpointError::VocabHash {
            header: header_hash,
            actual: vocab.hash(),
        });
    }
    if vocab.len() != vocab_size || (context + 1) * vocab_size != dim {
        return Err(lines.err("dimensions inconsistent with vocabulary and context"));
    }
    let w0 = lines.matrix("w0", vocab_size, dim)?;
    let adapter = if rank > 0 {
        let a = lines.matrix("adapter.a", rank, dim)?;
        let b = lines.matrix("adapter.b", vocab_size, rank)?;
        Some(LowRankAdapter { a, b })
    } else {
        None
    };
    if lines.inner.any(|(_, l)| !l.trim().is_empty()) {
        return Err(lines.err("trailing content"));
    }
    Ok(PolicyParameters::from_parts(Arc::new(vocab), context, w0, adapter, frozen))
}

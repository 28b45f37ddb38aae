use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::countdown::parse_expression;
use crate::policy::{TokenId, VocabError, Vocabulary, TGT};

/// Fixed feature map shared by every reward model.
///
/// Layout, with `V` the vocabulary size:
///
/// | columns        | feature                                              |
/// |----------------|------------------------------------------------------|
/// | `0..V`         | response token counts                                |
/// | `V..2V`        | first response token, one-hot                        |
/// | `2V..3V`       | last response token, one-hot                         |
/// | `3V`           | response length                                      |
/// | `3V+1`         | constant 1                                           |
/// | `3V+2`         | overlap: `Σ_t min(count_y(t), count_x(t))`           |
/// | `3V+3`         | mismatch: `Σ_t |count_y(t) − count_x(t)|`            |
/// | `3V+4`         | parentheses balanced                                 |
/// | `3V+5`         | response parses as an arithmetic expression          |
///
/// Overlap and mismatch run over content tokens (digits when the vocabulary
/// has any, otherwise every single-character non-space token) and over the
/// prompt up to its first `<TGT>`, with prompt counts divided by the
/// configured repeat factor. A trailing `<EOS>` is stripped first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewardEncoder {
    vocab: Arc<Vocabulary>,
    content: Vec<bool>,
    prompt_repeats: usize,
}

pub const LENGTH: usize = 0;
pub const BIAS: usize = 1;
pub const OVERLAP: usize = 2;
pub const MISMATCH: usize = 3;
pub const PARENS_BALANCED: usize = 4;
pub const PARSES: usize = 5;
const TAIL: usize = 6;

impl RewardEncoder {
    pub fn new(vocab: Arc<Vocabulary>) -> Self {
        let has_digits = vocab.ids().any(|t| vocab.is_digit(t));
        let content = vocab
            .ids()
            .map(|t| {
                if has_digits {
                    vocab.is_digit(t)
                } else {
                    let n = vocab.name(t).unwrap_or_default();
                    n.chars().count() == 1 && n != " "
                }
            })
            .collect();
        RewardEncoder {
            vocab,
            content,
            prompt_repeats: 1,
        }
    }

    /// For prompts that write their content list `repeats` times: prompt
    /// counts are divided by `repeats` before overlap and mismatch.
    pub fn with_prompt_repeats(mut self, repeats: usize) -> Self {
        self.prompt_repeats = repeats.max(1);
        self
    }

    pub fn prompt_repeats(&self) -> usize {
        self.prompt_repeats
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        3 * self.vocab.len() + TAIL
    }

    /// Column of a tail feature (`LENGTH`, `BIAS`, ...).
    pub fn tail(&self, feature: usize) -> usize {
        3 * self.vocab.len() + feature
    }

    pub fn bag(&self, token: TokenId) -> usize {
        token.index()
    }

    /// Hash of the feature layout: 16 hex digits.
    pub fn spec_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"reward-encoder v1\x1f");
        h.update(self.vocab.hash().as_bytes());
        h.update(self.dim().to_le_bytes());
        h.update(self.prompt_repeats.to_le_bytes());
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn encode(&self, x: &[TokenId], y: &[TokenId]) -> Result<Vec<f64>, VocabError> {
        self.vocab.check(x)?;
        self.vocab.check(y)?;
        let y = match y.last() {
            Some(&t) if t == self.vocab.eos() => &y[..y.len() - 1],
            _ => y,
        };
        let v = self.vocab.len();
        let mut f = vec![0.0; self.dim()];
        let mut cy = vec![0i64; v];
        for t in y {
            cy[t.index()] += 1;
            f[t.index()] += 1.0;
        }
        if let (Some(first), Some(last)) = (y.first(), y.last()) {
            f[v + first.index()] = 1.0;
            f[2 * v + last.index()] = 1.0;
        }
        let tgt = self.vocab.id(TGT);
        let prompt_end = x.iter().position(|&t| Some(t) == tgt).unwrap_or(x.len());
        let mut cx = vec![0i64; v];
        for t in &x[..prompt_end] {
            cx[t.index()] += 1;
        }
        let repeats = self.prompt_repeats as i64;
        cx.iter_mut().for_each(|c| *c /= repeats);
        let (mut overlap, mut mismatch) = (0i64, 0i64);
        for t in 0..v {
            if self.content[t] {
                overlap += cy[t].min(cx[t]);
                mismatch += (cy[t] - cx[t]).abs();
            }
        }
        let text = self.vocab.decode(y)?;
        f[self.tail(LENGTH)] = y.len() as f64;
        f[self.tail(BIAS)] = 1.0;
        f[self.tail(OVERLAP)] = overlap as f64;
        f[self.tail(MISMATCH)] = mismatch as f64;
        f[self.tail(PARENS_BALANCED)] = f64::from(u8::from(parens_balanced(&text)));
        f[self.tail(PARSES)] = f64::from(u8::from(parse_expression(&text).is_ok()));
        Ok(f)
    }
}

fn parens_balanced(text: &str) -> bool {
    let mut depth = 0i32;
    for c in text.chars() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0
}

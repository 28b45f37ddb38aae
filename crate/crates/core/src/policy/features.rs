use super::vocab::{TokenId, VocabError};

/// Context encoding of the toy policy.
///
/// Layout of a feature vector, with `V` the vocabulary size and `m` the
/// context window:
///
/// ```text
/// [ slot 0 one-hot (V) | slot 1 one-hot (V) | ... | slot m-1 (V) | prompt bag (V) ]
/// ```
///
/// Slot `j` holds the token `j + 1` positions back from the next one; slots
/// that fall before the start of the response encode `<BOS>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureMap {
    pub vocab_size: usize,
    pub context: usize,
    pub bos: TokenId,
}

pub const DEFAULT_CONTEXT: usize = 4;

/// Sparse feature vector: `(column, value)` pairs with distinct columns.
pub type SparseFeatures = Vec<(usize, f64)>;

impl FeatureMap {
    pub fn dim(&self) -> usize {
        (self.context + 1) * self.vocab_size
    }

    fn check(&self, tokens: &[TokenId]) -> Result<(), VocabError> {
        match tokens.iter().find(|t| t.index() >= self.vocab_size) {
            Some(t) => Err(VocabError::UnknownId(t.index(), self.vocab_size)),
            None => Ok(()),
        }
    }

    /// Token-count bag over the prompt, as sparse columns.
    pub fn prompt_bag(&self, prompt: &[TokenId]) -> Result<SparseFeatures, VocabError> {
        self.check(prompt)?;
        let mut counts = vec![0u32; self.vocab_size];
        for t in prompt {
            counts[t.index()] += 1;
        }
        let base = self.context * self.vocab_size;
        Ok(counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (base + i, c as f64))
            .collect())
    }

    /// Sparse features for predicting the token after `prefix`.
    pub fn step_sparse(&self, bag: &[(usize, f64)], prefix: &[TokenId]) -> SparseFeatures {
        let mut out = Vec::with_capacity(self.context + bag.len());
        for slot in 0..self.context {
            let tok = prefix
                .len()
                .checked_sub(slot + 1)
                .map(|p| prefix[p])
                .unwrap_or(self.bos);
            out.push((slot * self.vocab_size + tok.index(), 1.0));
        }
        out.extend_from_slice(bag);
        out
    }

    pub fn featurize_step(&self, prompt: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>, VocabError> {
        self.check(prefix)?;
        let bag = self.prompt_bag(prompt)?;
        let mut dense = vec![0.0; self.dim()];
        for (i, v) in self.step_sparse(&bag, prefix) {
            dense[i] += v;
        }
        Ok(dense)
    }
}

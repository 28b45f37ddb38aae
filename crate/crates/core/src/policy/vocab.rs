use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Dense token id into a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenId(pub u16);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("token id {0} outside vocabulary of size {1}")]
    UnknownId(usize, usize),
    #[error("unknown token at byte {offset} of {text:?}")]
    UnknownText { text: String, offset: usize },
    #[error("vocabulary must hold 2..=32 distinct tokens including <BOS> and <EOS>")]
    Malformed,
}

pub const BOS: &str = "<BOS>";
pub const EOS: &str = "<EOS>";
pub const SEP: &str = "<SEP>";
pub const NUMS: &str = "<NUMS>";
pub const TGT: &str = "<TGT>";
pub const SPACE: &str = " ";

/// Largest vocabulary the policy supports.
pub const MAX_VOCAB: usize = 32;

/// Ordered, frozen token set. Multi-character names are written as
/// `<NAME>` in text; everything else is a single character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    bos: TokenId,
    eos: TokenId,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self, VocabError> {
        if tokens.len() < 2 || tokens.len() > MAX_VOCAB {
            return Err(VocabError::Malformed);
        }
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            let well_formed = t.chars().count() == 1 || (t.starts_with('<') && t.ends_with('>') && t.len() > 2);
            if !well_formed || index.insert(t.clone(), TokenId(i as u16)).is_some() {
                return Err(VocabError::Malformed);
            }
        }
        let bos = *index.get(BOS).ok_or(VocabError::Malformed)?;
        let eos = *index.get(EOS).ok_or(VocabError::Malformed)?;
        Ok(Vocabulary {
            tokens,
            index,
            bos,
            eos,
        })
    }

    /// The 22-token Countdown alphabet: structural tokens, prompt keywords,
    /// digits, operators and parentheses.
    pub fn countdown() -> Self {
        let mut tokens: Vec<String> = [BOS, EOS, SEP, SPACE, NUMS, TGT].iter().map(|s| s.to_string()).collect();
        tokens.extend(('0'..='9').map(String::from));
        tokens.extend(["+", "-", "*", "/", "(", ")"].iter().map(|s| s.to_string()));
        Vocabulary::new(tokens).expect("countdown vocabulary is well formed")
    }

    /// Minimal vocabulary `<BOS>`, `<EOS>`, `a`, `b`, ... of the given size,
    /// used for exhaustively enumerable toy policies.
    pub fn synthetic(size: usize) -> Result<Self, VocabError> {
        if size < 2 {
            return Err(VocabError::Malformed);
        }
        let mut tokens = vec![BOS.to_string(), EOS.to_string()];
        tokens.extend((0..size - 2).map(|i| char::from(b'a' + i as u8).to_string()));
        Vocabulary::new(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn bos(&self) -> TokenId {
        self.bos
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, name: &str) -> Option<TokenId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: TokenId) -> Result<&str, VocabError> {
        self.tokens
            .get(id.index())
            .map(String::as_str)
            .ok_or(VocabError::UnknownId(id.index(), self.len()))
    }

    pub fn ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.len()).map(|i| TokenId(i as u16))
    }

    pub fn check(&self, tokens: &[TokenId]) -> Result<(), VocabError> {
        match tokens.iter().find(|t| t.index() >= self.len()) {
            Some(t) => Err(VocabError::UnknownId(t.index(), self.len())),
            None => Ok(()),
        }
    }

    pub fn is_digit(&self, id: TokenId) -> bool {
        self.name(id)
            .map(|n| n.len() == 1 && n.as_bytes()[0].is_ascii_digit())
            .unwrap_or(false)
    }

    /// Splits text into tokens. `<NAME>` forms match multi-character tokens.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>, VocabError> {
        let mut out = Vec::new();
        let mut rest = text;
        let mut offset = 0;
        while !rest.is_empty() {
            let unknown = || VocabError::UnknownText {
                text: text.to_string(),
                offset,
            };
            let len = if rest.starts_with('<') {
                match rest.find('>') {
                    Some(end) if self.index.contains_key(&rest[..=end]) => end + 1,
                    _ => rest.chars().next().map(char::len_utf8).unwrap_or(1),
                }
            } else {
                rest.chars().next().map(char::len_utf8).unwrap_or(1)
            };
            let id = self.index.get(&rest[..len]).copied().ok_or_else(unknown)?;
            out.push(id);
            rest = &rest[len..];
            offset += len;
        }
        Ok(out)
    }

    pub fn decode(&self, tokens: &[TokenId]) -> Result<String, VocabError> {
        tokens.iter().map(|&t| self.name(t)).collect()
    }

    /// Stable content hash: first 16 hex digits of SHA-256 over the ordered
    /// token names.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0x1f]);
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

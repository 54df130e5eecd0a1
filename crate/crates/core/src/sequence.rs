//! Feature subsets written as token sequences.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::vocab::{self, Vocabulary, EOS};

/// An ordered list of token ids.
///
/// Decoder output and augmented records may hold any order; [`canonicalize`]
/// produces the set form (sorted, deduplicated, feature tokens only).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<u32>);

impl TokenSequence {
    pub fn new(tokens: Vec<u32>) -> Self {
        Self(tokens)
    }

    pub fn from_columns(vocab: &Vocabulary, columns: impl IntoIterator<Item = usize>) -> Self {
        canonicalize(&Self(columns.into_iter().map(|c| vocab.token(c)).collect()))
    }

    pub fn tokens(&self) -> &[u32] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<u32> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Strictly increasing feature tokens only.
    pub fn is_canonical(&self) -> bool {
        self.0.iter().all(|&t| !vocab::is_special(t)) && self.0.windows(2).all(|w| w[0] < w[1])
    }

    /// Column indices of the feature tokens, in sequence order. Specials are skipped.
    pub fn columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .filter(|&&t| !vocab::is_special(t))
            .map(|&t| (t - vocab::FIRST_FEATURE) as usize)
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, &t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match t {
                vocab::PAD => f.write_str("<PAD>")?,
                vocab::SOS => f.write_str("<SOS>")?,
                vocab::EOS => f.write_str("<EOS>")?,
                t => write!(f, "b{}", t - vocab::FIRST_FEATURE)?,
            }
        }
        f.write_str("]")
    }
}

/// Reduces a raw decoded token list to its canonical subset.
///
/// Everything from the first EOS on is dropped, then the remaining special
/// tokens, then duplicates; the result is sorted ascending and may be empty.
pub fn canonicalize(raw: &TokenSequence) -> TokenSequence {
    let mut tokens: Vec<u32> = raw
        .0
        .iter()
        .copied()
        .take_while(|&t| t != EOS)
        .filter(|&t| !vocab::is_special(t))
        .collect();
    tokens.sort_unstable();
    tokens.dedup();
    TokenSequence(tokens)
}

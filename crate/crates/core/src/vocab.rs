//! Token ids for feature columns plus the three special tokens.

use serde::{Deserialize, Serialize};

pub const PAD: u32 = 0;
pub const SOS: u32 = 1;
pub const EOS: u32 = 2;
/// Id of the token for column 0; column `j` is `FIRST_FEATURE + j`.
pub const FIRST_FEATURE: u32 = 3;
pub const N_SPECIAL: usize = 3;

pub fn is_special(token: u32) -> bool {
    token < FIRST_FEATURE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    n_features: usize,
}

impl Vocabulary {
    pub fn new(n_features: usize) -> Self {
        Self { n_features }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Total number of token ids, specials included.
    pub fn size(&self) -> usize {
        self.n_features + N_SPECIAL
    }

    pub fn token(&self, column: usize) -> u32 {
        debug_assert!(column < self.n_features);
        column as u32 + FIRST_FEATURE
    }

    pub fn column(&self, token: u32) -> Option<usize> {
        if is_special(token) {
            return None;
        }
        let column = (token - FIRST_FEATURE) as usize;
        (column < self.n_features).then_some(column)
    }

    pub fn is_feature(&self, token: u32) -> bool {
        self.column(token).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_column_bijection() {
        let vocab = Vocabulary::new(7);
        assert_eq!(vocab.size(), 10);
        for column in 0..7 {
            assert_eq!(vocab.column(vocab.token(column)), Some(column));
        }
        for special in [PAD, SOS, EOS] {
            assert_eq!(vocab.column(special), None);
        }
        assert_eq!(vocab.column(10), None);
    }
}

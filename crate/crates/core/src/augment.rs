//! Order-shuffling augmentation of subset records.
//!
//! A subset's utility does not depend on the order its tokens are written in,
//! so every record can be copied under random permutations with the same
//! utility attached.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::record::SubsetRecord;
use crate::sequence::TokenSequence;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Permutation draws per record. Draws that repeat the original or an
    /// earlier draw are discarded, not retried.
    pub shuffles_per_record: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            shuffles_per_record: 25,
            seed: 0,
        }
    }
}

/// Returns every input record, each followed by its distinct shuffled copies.
///
/// Record `i` draws from its own RNG stream, so the output is deterministic
/// for a given seed regardless of thread scheduling.
pub fn shuffle_augment(records: &[SubsetRecord], cfg: &AugmentConfig) -> Vec<SubsetRecord> {
    records
        .par_iter()
        .enumerate()
        .map(|(i, record)| {
            let mut group = vec![record.clone()];
            if record.sequence.len() < 2 {
                return group;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let mut seen: HashSet<Vec<u32>> = HashSet::new();
            seen.insert(record.sequence.tokens().to_vec());
            let mut tokens = record.sequence.tokens().to_vec();
            for _ in 0..cfg.shuffles_per_record {
                tokens.shuffle(&mut rng);
                if seen.insert(tokens.clone()) {
                    group.push(SubsetRecord {
                        sequence: TokenSequence::new(tokens.clone()),
                        utility: record.utility,
                    });
                }
            }
            group
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

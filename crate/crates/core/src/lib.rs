//! Feature-subset selection through a learned continuous space.
//!
//! The pipeline has four stages:
//!
//! 1. [`collector`] explores feature subsets with one DQN agent per feature and
//!    records `(subset, utility)` pairs measured by [`downstream`].
//! 2. [`augment`] multiplies those records with order-permuted copies.
//! 3. [`seqmodel`] trains a variational transformer (encoder, decoder, utility
//!    evaluator) on the token sequences.
//! 4. [`search`] moves the embeddings of the best records uphill on the
//!    evaluator and decodes the visited points back into feature subsets.
//!
//! [`synth`] produces planted-signal datasets for testing the whole loop.

pub mod augment;
pub mod collector;
pub mod dataset;
pub mod downstream;
mod error;
pub mod record;
pub mod search;
pub mod seqmodel;
pub mod sequence;
pub mod stats;
pub mod synth;
pub mod vocab;

pub use dataset::TabularDataset;
pub use error::{Error, Result};
pub use record::{FoldMetrics, MetricsReport, SubsetRecord};
pub use sequence::TokenSequence;
pub use vocab::Vocabulary;

/// Measured quality of a feature subset, as returned by a [`SubsetScorer`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    /// The scalar stored in records and optimized by the collector.
    pub utility: f64,
    /// Used as a tie-breaker when selecting the final subset.
    pub f1: f64,
}

/// Anything that can measure the downstream quality of a canonical subset.
///
/// Implementations must be deterministic and safe to call from several threads.
pub trait SubsetScorer: Sync {
    fn score(&self, subset: &TokenSequence) -> Result<Score>;
}

impl<F> SubsetScorer for F
where
    F: Fn(&TokenSequence) -> Result<Score> + Sync,
{
    fn score(&self, subset: &TokenSequence) -> Result<Score> {
        self(subset)
    }
}

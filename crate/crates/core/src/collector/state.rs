//! Fixed-size state vector for a feature subset of any size.
//!
//! Each selected column is summarised by seven descriptives (mean, std, min,
//! quartiles, max). Each of those seven statistics is then summarised across
//! the selected columns by the same seven descriptives, giving 49 numbers.

use crate::dataset::TabularDataset;
use crate::stats::{describe, N_DESCRIPTIVES};

pub const STATE_DIM: usize = N_DESCRIPTIVES * N_DESCRIPTIVES;

/// Per-column descriptives, computed once per dataset.
#[derive(Debug, Clone)]
pub struct ColumnSummaries(Vec<[f64; N_DESCRIPTIVES]>);

impl ColumnSummaries {
    pub fn new(ds: &TabularDataset) -> Self {
        Self(
            (0..ds.n_features())
                .map(|j| describe(&ds.column(j).to_vec()))
                .collect(),
        )
    }

    /// State of the subset formed by `columns`. Row-major: entry
    /// `7 * d + s` is summary `s` of column-descriptive `d`.
    pub fn state(&self, columns: &[usize]) -> [f64; STATE_DIM] {
        let mut out = [0.0; STATE_DIM];
        if columns.is_empty() {
            return out;
        }
        let mut values = Vec::with_capacity(columns.len());
        for d in 0..N_DESCRIPTIVES {
            values.clear();
            values.extend(columns.iter().map(|&j| self.0[j][d]));
            out[d * N_DESCRIPTIVES..(d + 1) * N_DESCRIPTIVES].copy_from_slice(&describe(&values));
        }
        out
    }
}

/// Convenience wrapper computing the summaries on the fly.
pub fn state_repr(ds: &TabularDataset, columns: &[usize]) -> [f64; STATE_DIM] {
    ColumnSummaries::new(ds).state(columns)
}

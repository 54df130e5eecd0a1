//! Shared reward: downstream utility plus relevance minus redundancy.

use crate::dataset::TabularDataset;
use crate::stats::unit_centered;

/// Reward of an empty selection, which is never sent downstream.
pub const EMPTY_SUBSET_REWARD: f64 = -1.0;

pub fn reward(utility: f64, relevance: f64, redundancy: f64, lambda_rel: f64, lambda_red: f64) -> f64 {
    utility + lambda_rel * relevance - lambda_red * redundancy
}

/// Centered, unit-norm columns and label, so correlations are dot products.
#[derive(Debug, Clone)]
pub struct Correlations {
    columns: Vec<Vec<f64>>,
    label_corr: Vec<f64>,
}

impl Correlations {
    pub fn new(ds: &TabularDataset) -> Self {
        let label: Vec<f64> = ds.labels().iter().map(|&l| f64::from(l)).collect();
        let label = unit_centered(&label);
        let columns: Vec<Vec<f64>> = (0..ds.n_features())
            .map(|j| unit_centered(&ds.column(j).to_vec()))
            .collect();
        let label_corr = columns.iter().map(|c| dot(c, &label).abs()).collect();
        Self { columns, label_corr }
    }

    /// Mean |corr(feature, label)| over the selection; 0 if empty.
    pub fn relevance(&self, selected: &[usize]) -> f64 {
        if selected.is_empty() {
            return 0.0;
        }
        selected.iter().map(|&j| self.label_corr[j]).sum::<f64>() / selected.len() as f64
    }

    /// Mean |corr(f_i, f_j)| over unordered pairs; 0 with fewer than two features.
    pub fn redundancy(&self, selected: &[usize]) -> f64 {
        if selected.len() < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for (a, &i) in selected.iter().enumerate() {
            for &j in &selected[a + 1..] {
                total += dot(&self.columns[i], &self.columns[j]).abs();
            }
        }
        let pairs = selected.len() * (selected.len() - 1) / 2;
        total / pairs as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

//! One-way ANOVA F-test filter used as a baseline selector.

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::sequence::TokenSequence;

/// F statistic of each feature between the label-0 and label-1 groups.
///
/// A feature with zero within-group variance scores `+inf` if the group
/// means differ and 0 if they do not.
pub fn f_statistics(ds: &TabularDataset) -> Vec<f64> {
    let labels = ds.labels();
    let n = labels.len() as f64;
    (0..ds.n_features())
        .map(|j| {
            let col = ds.column(j);
            let mut sum = [0.0f64; 2];
            let mut count = [0.0f64; 2];
            for (&x, &l) in col.iter().zip(labels) {
                sum[l as usize] += x;
                count[l as usize] += 1.0;
            }
            if count[0] == 0.0 || count[1] == 0.0 {
                return 0.0;
            }
            let group_mean = [sum[0] / count[0], sum[1] / count[1]];
            let grand = (sum[0] + sum[1]) / n;
            let between: f64 = (0..2)
                .map(|g| count[g] * (group_mean[g] - grand).powi(2))
                .sum();
            let within: f64 = col
                .iter()
                .zip(labels)
                .map(|(&x, &l)| (x - group_mean[l as usize]).powi(2))
                .sum();
            // between has 1 degree of freedom, within has n - 2
            match (between > 0.0, within > 0.0) {
                (_, true) => between / (within / (n - 2.0)),
                (true, false) => f64::INFINITY,
                (false, false) => 0.0,
            }
        })
        .collect()
}

/// Tokens of the `k` features with the largest F statistic, lower column
/// index first among ties, in canonical order.
pub fn baseline_ftest(ds: &TabularDataset, k: usize) -> Result<TokenSequence> {
    if k == 0 || k > ds.n_features() {
        return Err(Error::Config(format!(
            "F-test k must be in 1..={}, got {k}",
            ds.n_features()
        )));
    }
    let stats = f_statistics(ds);
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| stats[b].total_cmp(&stats[a]).then(a.cmp(&b)));
    Ok(TokenSequence::from_columns(
        &ds.vocabulary(),
        order.into_iter().take(k),
    ))
}

//! Binary classification metrics with label 1 as the positive class.

use crate::record::FoldMetrics;

/// Precision, recall, F1 and accuracy from hard predictions, plus AUC from
/// scores. The boolean is true when all scores are equal and AUC was set to 0.5.
pub fn fold_metrics(truth: &[u8], predicted: &[u8], scores: &[f64]) -> (FoldMetrics, bool) {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut correct = 0usize;
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fn_ += 1,
            _ => {}
        }
        correct += usize::from(t == p);
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let constant = scores.windows(2).all(|w| w[0] == w[1]);
    let auc = if constant { 0.5 } else { auc(truth, scores) };
    (
        FoldMetrics {
            precision,
            recall,
            f1,
            auc,
            accuracy: ratio(correct, truth.len()),
        },
        constant,
    )
}

/// Area under the ROC curve via the Mann-Whitney statistic, ties counted as
/// one half. Returns 0.5 if either class is absent.
pub fn auc(truth: &[u8], scores: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // average of 1-based ranks i+1 ..= j+1
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    let n_pos = truth.iter().filter(|&&t| t == 1).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    let rank_sum: f64 = truth
        .iter()
        .zip(&ranks)
        .filter(|(&t, _)| t == 1)
        .map(|(_, r)| r)
        .sum();
    (rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64
}

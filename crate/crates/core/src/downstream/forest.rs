//! Random forest of unpruned CART classifiers (Gini impurity, bootstrap
//! resampling, `sqrt(n_features)` candidate features per split).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows every tree until its leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(u8),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, columns: &[Vec<f64>], row: usize) -> u8 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(class) => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if columns[feature][row] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<Tree>,
}

impl RandomForest {
    /// Fits on the rows `train` of the column-major matrix `columns`.
    pub fn fit(
        columns: &[Vec<f64>],
        labels: &[u8],
        train: &[usize],
        params: &ForestParams,
        seed: u64,
    ) -> Self {
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let sample: Vec<usize> = if params.bootstrap {
                    (0..train.len())
                        .map(|_| train[rng.random_range(0..train.len())])
                        .collect()
                } else {
                    train.to_vec()
                };
                grow_tree(columns, labels, sample, params, &mut rng)
            })
            .collect();
        Self { trees }
    }

    /// Fraction of trees voting for class 1.
    pub fn vote_fraction(&self, columns: &[Vec<f64>], row: usize) -> f64 {
        let ones = self
            .trees
            .iter()
            .filter(|t| t.predict(columns, row) == 1)
            .count();
        ones as f64 / self.trees.len() as f64
    }
}

fn grow_tree(
    columns: &[Vec<f64>],
    labels: &[u8],
    sample: Vec<usize>,
    params: &ForestParams,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let n_features = columns.len();
    let max_features = ((n_features as f64).sqrt() as usize).clamp(1, n_features);
    let mut nodes = vec![Node::Leaf(0)];
    // (node index, samples, depth)
    let mut stack = vec![(0usize, sample, 0usize)];
    let mut order: Vec<usize> = (0..n_features).collect();
    let mut scratch: Vec<(f64, u8)> = Vec::new();

    while let Some((at, samples, depth)) = stack.pop() {
        let ones = samples.iter().filter(|&&r| labels[r] == 1).count();
        let zeros = samples.len() - ones;
        let majority = u8::from(ones > zeros);
        let depth_capped = params.max_depth.is_some_and(|d| depth >= d);
        if ones == 0 || zeros == 0 || samples.len() < params.min_samples_split || depth_capped {
            nodes[at] = Node::Leaf(majority);
            continue;
        }

        order.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut informative = 0;
        for &feature in &order {
            if informative == max_features {
                break;
            }
            scratch.clear();
            scratch.extend(samples.iter().map(|&r| (columns[feature][r], labels[r])));
            scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            if scratch[0].0 == scratch[scratch.len() - 1].0 {
                continue;
            }
            informative += 1;
            if let Some((score, threshold)) = best_threshold(&scratch, ones, zeros) {
                if best.is_none_or(|(s, _, _)| score > s) {
                    best = Some((score, feature, threshold));
                }
            }
        }

        let Some((_, feature, threshold)) = best else {
            nodes[at] = Node::Leaf(majority);
            continue;
        };
        let (left_samples, right_samples): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&r| columns[feature][r] <= threshold);
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf(0));
        nodes.push(Node::Leaf(0));
        nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        stack.push((right, right_samples, depth + 1));
        stack.push((left, left_samples, depth + 1));
    }
    Tree { nodes }
}

/// Best split of sorted `(value, label)` pairs. Returns the Gini score to
/// maximise (`sum_k n_{side,k}^2 / n_side` over both sides) and the threshold.
fn best_threshold(sorted: &[(f64, u8)], ones: usize, zeros: usize) -> Option<(f64, f64)> {
    let n = sorted.len();
    let (mut left_ones, mut left_zeros) = (0usize, 0usize);
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        if sorted[i].1 == 1 {
            left_ones += 1;
        } else {
            left_zeros += 1;
        }
        let (v, next) = (sorted[i].0, sorted[i + 1].0);
        if v == next {
            continue;
        }
        let n_left = (i + 1) as f64;
        let n_right = (n - i - 1) as f64;
        let (right_ones, right_zeros) = (ones - left_ones, zeros - left_zeros);
        let score = ((left_ones * left_ones + left_zeros * left_zeros) as f64) / n_left
            + ((right_ones * right_ones + right_zeros * right_zeros) as f64) / n_right;
        if best.is_none_or(|(s, _)| score > s) {
            let mid = v + (next - v) / 2.0;
            let threshold = if mid < next { mid } else { v };
            best = Some((score, threshold));
        }
    }
    best
}

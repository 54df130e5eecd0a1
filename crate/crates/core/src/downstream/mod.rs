//! Downstream utility oracle: stratified k-fold cross-validation of a
//! classifier restricted to a feature subset.

mod cv;
mod forest;
mod ftest;
mod logistic;
mod metrics;

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cv::{stratified_folds, train_indices};
pub use forest::{ForestParams, RandomForest};
pub use ftest::{baseline_ftest, f_statistics};
pub use logistic::LogisticModel;
pub use metrics::{auc, fold_metrics};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::record::MetricsReport;
use crate::sequence::{canonicalize, TokenSequence};
use crate::{Score, SubsetScorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[default]
    TreeEnsemble,
    Logistic,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree_ensemble" | "rf" | "random_forest" => Ok(Self::TreeEnsemble),
            "logistic" | "lr" => Ok(Self::Logistic),
            other => Err(Error::Config(format!("unknown classifier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UtilityMetric {
    #[default]
    Accuracy,
    F1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub classifier: ClassifierKind,
    pub folds: usize,
    pub seed: u64,
    pub utility_metric: UtilityMetric,
    /// Trees per forest when `classifier` is the tree ensemble.
    pub trees: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            classifier: ClassifierKind::TreeEnsemble,
            folds: 5,
            seed: 0,
            utility_metric: UtilityMetric::Accuracy,
            trees: 100,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be >= 2, got {}", self.folds)));
        }
        if self.trees == 0 {
            return Err(Error::Config("trees must be positive".into()));
        }
        Ok(())
    }

    pub fn utility_of(&self, report: &MetricsReport) -> f64 {
        match self.utility_metric {
            UtilityMetric::Accuracy => report.accuracy,
            UtilityMetric::F1 => report.f1,
        }
    }
}

/// Cross-validated metrics of a classifier trained on the columns of `subset`.
///
/// The subset is canonicalized first, so token order and repeats do not matter.
/// Fold assignment and classifier randomness depend only on `cfg.seed`.
pub fn evaluate_subset(
    ds: &TabularDataset,
    subset: &TokenSequence,
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    cfg.validate()?;
    let subset = canonicalize(subset);
    let columns = ds.subset_columns(&subset)?;
    ds.require_both_classes()?;
    let labels = ds.labels();
    let data: Vec<Vec<f64>> = columns.iter().map(|&j| ds.column(j).to_vec()).collect();
    let folds = stratified_folds(labels, cfg.folds, cfg.seed)?;

    let results: Vec<_> = folds
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let train = train_indices(labels.len(), test);
            let scores: Vec<f64> = match cfg.classifier {
                ClassifierKind::TreeEnsemble => {
                    let params = ForestParams {
                        n_trees: cfg.trees,
                        ..Default::default()
                    };
                    let seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ f as u64;
                    let forest = RandomForest::fit(&data, labels, &train, &params, seed);
                    test.iter().map(|&r| forest.vote_fraction(&data, r)).collect()
                }
                ClassifierKind::Logistic => {
                    let model = LogisticModel::fit(&data, labels, &train);
                    test.iter().map(|&r| model.probability(&data, r)).collect()
                }
            };
            let truth: Vec<u8> = test.iter().map(|&r| labels[r]).collect();
            let predicted: Vec<u8> = scores.iter().map(|&s| u8::from(s > 0.5)).collect();
            fold_metrics(&truth, &predicted, &scores)
        })
        .collect();

    let auc_undefined = results.iter().any(|(_, flat)| *flat);
    if auc_undefined {
        log::warn!("constant classifier scores in some fold of {subset}; AUC reported as 0.5");
    }
    Ok(MetricsReport::from_folds(
        results.into_iter().map(|(m, _)| m).collect(),
        auc_undefined,
    ))
}

/// The scalar utility stored in records: mean fold accuracy, or F1 if configured.
pub fn utility(ds: &TabularDataset, subset: &TokenSequence, cfg: &EvalConfig) -> Result<f64> {
    Ok(cfg.utility_of(&evaluate_subset(ds, subset, cfg)?))
}

/// Memoising [`SubsetScorer`] over one dataset and evaluation config.
pub struct SubsetEvaluator<'a> {
    ds: &'a TabularDataset,
    cfg: EvalConfig,
    cache: Mutex<HashMap<TokenSequence, MetricsReport>>,
}

impl<'a> SubsetEvaluator<'a> {
    pub fn new(ds: &'a TabularDataset, cfg: EvalConfig) -> Result<Self> {
        cfg.validate()?;
        ds.require_both_classes()?;
        Ok(Self {
            ds,
            cfg,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn dataset(&self) -> &TabularDataset {
        self.ds
    }

    pub fn config(&self) -> &EvalConfig {
        &self.cfg
    }

    pub fn evaluate(&self, subset: &TokenSequence) -> Result<MetricsReport> {
        let key = canonicalize(subset);
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let report = evaluate_subset(self.ds, &key, &self.cfg)?;
        self.cache.lock().unwrap().insert(key, report.clone());
        Ok(report)
    }

    /// Number of distinct subsets evaluated so far.
    pub fn evaluations(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

impl SubsetScorer for SubsetEvaluator<'_> {
    fn score(&self, subset: &TokenSequence) -> Result<Score> {
        let report = self.evaluate(subset)?;
        Ok(Score {
            utility: self.cfg.utility_of(&report),
            f1: report.f1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn separable(n: usize, noise_cols: usize, seed: u64) -> TabularDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let x = Array2::from_shape_fn((n, noise_cols + 1), |(i, j)| {
            if j == 0 {
                f64::from(labels[i])
            } else {
                rng.random::<f64>()
            }
        });
        TabularDataset::from_matrix(x, labels).unwrap()
    }

    fn b(columns: &[u32]) -> TokenSequence {
        TokenSequence::new(columns.iter().map(|c| c + 3).collect())
    }

    #[test]
    fn label_copy_is_perfect() {
        let ds = separable(40, 3, 1);
        for classifier in [ClassifierKind::TreeEnsemble, ClassifierKind::Logistic] {
            let cfg = EvalConfig {
                classifier,
                ..Default::default()
            };
            let r = evaluate_subset(&ds, &b(&[0]), &cfg).unwrap();
            assert_eq!((r.f1, r.auc, r.accuracy), (1.0, 1.0, 1.0), "{classifier:?}");
            assert_eq!(r.per_fold.len(), 5);
            let f1_cfg = EvalConfig {
                utility_metric: UtilityMetric::F1,
                ..cfg
            };
            assert_eq!(utility(&ds, &b(&[0]), &f1_cfg).unwrap(), 1.0);
        }
    }

    #[test]
    fn degenerate_labels() {
        let x = Array2::from_shape_fn((10, 2), |(i, j)| (i + j) as f64);
        let ds = TabularDataset::from_matrix(x, vec![1; 10]).unwrap();
        assert!(matches!(
            evaluate_subset(&ds, &b(&[0]), &EvalConfig::default()),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn empty_subset_is_rejected() {
        let ds = separable(20, 1, 0);
        assert!(matches!(
            evaluate_subset(&ds, &TokenSequence::default(), &EvalConfig::default()),
            Err(Error::EmptySubset)
        ));
    }

    #[test]
    fn order_and_repeats_do_not_matter() {
        let ds = separable(30, 4, 2);
        let cfg = EvalConfig::default();
        let a = evaluate_subset(&ds, &b(&[1, 3, 4]), &cfg).unwrap();
        let p = evaluate_subset(&ds, &b(&[4, 1, 3, 1]), &cfg).unwrap();
        assert_eq!(a, p);
        assert_eq!(a, evaluate_subset(&ds, &b(&[1, 3, 4]), &cfg).unwrap());
    }

    #[test]
    fn noise_features_are_near_chance() {
        // Labels independent of every feature: accuracy should sit near 0.5.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200;
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let x = Array2::from_shape_fn((n, 5), |_| rng.random::<f64>());
        let ds = TabularDataset::from_matrix(x, labels).unwrap();
        let u = utility(&ds, &b(&[0, 1, 2, 3, 4]), &EvalConfig::default()).unwrap();
        // binomial sd of accuracy at n=200 is ~0.035; allow 4 sd
        assert!((u - 0.5).abs() < 0.14, "{u}");
    }

    #[test]
    fn evaluator_caches_by_canonical_form() {
        let ds = separable(20, 2, 3);
        let ev = SubsetEvaluator::new(&ds, EvalConfig::default()).unwrap();
        let s1 = ev.score(&b(&[2, 0])).unwrap();
        let s2 = ev.score(&b(&[0, 2])).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(ev.evaluations(), 1);
    }
}

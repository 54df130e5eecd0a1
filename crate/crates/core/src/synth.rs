//! Synthetic high-dimensional, low-sample-size classification data with a
//! planted set of informative features.
//!
//! Labels come from thresholding a sparse linear score of the informative
//! features at its median, followed by random label flips. Each informative
//! feature gets noisy near-copies, and the remaining columns are pure noise.
//! Columns are shuffled so that position carries no information.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_features: usize,
    pub n_samples: usize,
    pub n_informative: usize,
    /// Near-copies per informative feature; fewer are made if columns run out.
    pub copies_per_informative: usize,
    pub copy_noise: f64,
    pub flip_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_features: 200,
            n_samples: 100,
            n_informative: 10,
            copies_per_informative: 3,
            copy_noise: 0.1,
            flip_rate: 0.05,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_informative == 0 || self.n_informative > self.n_features {
            return Err(Error::Config(format!(
                "n_informative must be in 1..={}, got {}",
                self.n_features, self.n_informative
            )));
        }
        if self.n_samples < 10 {
            return Err(Error::Config(format!(
                "n_samples must be >= 10, got {}",
                self.n_samples
            )));
        }
        if !(0.0..=0.5).contains(&self.flip_rate) {
            return Err(Error::Config(format!(
                "flip_rate must be in [0, 0.5], got {}",
                self.flip_rate
            )));
        }
        if !(self.copy_noise >= 0.0 && self.copy_noise.is_finite()) {
            return Err(Error::Config("copy_noise must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Sorted column indices of the planted informative features.
    pub informative: Vec<usize>,
    /// `collinear_copies[i]` holds the copy columns of `informative[i]`.
    pub collinear_copies: Vec<Vec<usize>>,
    /// Signed logit weight of `informative[i]`.
    pub weights: Vec<f64>,
}

impl GroundTruth {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Informative columns together with their copies.
    pub fn relevant(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self
            .informative
            .iter()
            .chain(self.collinear_copies.iter().flatten())
            .copied()
            .collect();
        all.sort_unstable();
        all
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<(TabularDataset, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, p, k) = (cfg.n_samples, cfg.n_features, cfg.n_informative);

    let signals = Array2::from_shape_fn((n, k), |_| rng.sample::<f64, _>(StandardNormal));
    let weights: Vec<f64> = (0..k)
        .map(|_| {
            let w = rng.random_range(1.0..=2.0);
            if rng.random::<bool>() {
                w
            } else {
                -w
            }
        })
        .collect();
    let logits: Vec<f64> = signals
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(&weights).map(|(x, w)| x * w).sum())
        .collect();
    let mut sorted = logits.clone();
    sorted.sort_by(f64::total_cmp);
    let median = crate::stats::quantile_sorted(&sorted, 0.5);
    let labels: Vec<u8> = logits
        .iter()
        .map(|&z| {
            let label = u8::from(z > median);
            if rng.random::<f64>() < cfg.flip_rate {
                1 - label
            } else {
                label
            }
        })
        .collect();

    // Logical column order: informative, copies (round-robin), noise.
    let n_copies = (k * cfg.copies_per_informative).min(p - k);
    let mut source = Vec::with_capacity(p); // Some(i) = informative i or a copy of it
    source.extend((0..k).map(Some));
    source.extend((0..n_copies).map(|c| Some(c % k)));
    source.resize(p, None);

    let mut placement: Vec<usize> = (0..p).collect();
    placement.shuffle(&mut rng);

    let mut x = Array2::zeros((n, p));
    for (logical, &column) in placement.iter().enumerate() {
        let is_copy = logical >= k;
        for row in 0..n {
            x[[row, column]] = match source[logical] {
                Some(i) if !is_copy => signals[[row, i]],
                Some(i) => signals[[row, i]] + cfg.copy_noise * rng.sample::<f64, _>(StandardNormal),
                None => rng.sample(StandardNormal),
            };
        }
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&i| placement[i]);
    let informative = order.iter().map(|&i| placement[i]).collect();
    let collinear_copies = order
        .iter()
        .map(|&i| {
            let mut cols: Vec<usize> = (k..k + n_copies)
                .filter(|&logical| source[logical] == Some(i))
                .map(|logical| placement[logical])
                .collect();
            cols.sort_unstable();
            cols
        })
        .collect();
    let truth = GroundTruth {
        informative,
        collinear_copies,
        weights: order.iter().map(|&i| weights[i]).collect(),
    };
    Ok((TabularDataset::from_matrix(x, labels)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::pearson;

    #[test]
    fn default_shape_and_balance() {
        let (ds, truth) = generate(&SynthConfig::default()).unwrap();
        assert_eq!((ds.n_samples(), ds.n_features()), (100, 200));
        let [zeros, ones] = ds.class_counts();
        assert!(zeros.abs_diff(ones) <= 20, "{zeros} vs {ones}");
        assert_eq!(truth.informative.len(), 10);
        assert!(truth.collinear_copies.iter().all(|c| c.len() == 3));
        assert_eq!(truth.relevant().len(), 40);
        assert!(truth.weights.iter().all(|w| (1.0..=2.0).contains(&w.abs())));
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            n_features: 30,
            seed: 4,
            ..Default::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig { seed: 5, ..cfg.clone() };
        assert_ne!(generate(&other).unwrap().0, generate(&cfg).unwrap().0);
    }

    #[test]
    fn copies_track_their_source() {
        let (ds, truth) = generate(&SynthConfig::default()).unwrap();
        let mut total = 0.0;
        let mut count = 0.0;
        for (src, copies) in truth.informative.iter().zip(&truth.collinear_copies) {
            let a = ds.column(*src).to_vec();
            for c in copies {
                total += pearson(&a, &ds.column(*c).to_vec()).abs();
                count += 1.0;
            }
        }
        assert!(total / count > 0.8);
    }

    #[test]
    fn copies_shrink_to_fit() {
        let cfg = SynthConfig {
            n_features: 10,
            n_informative: 3,
            ..Default::default()
        };
        let (ds, truth) = generate(&cfg).unwrap();
        assert_eq!(ds.n_features(), 10);
        assert_eq!(truth.relevant().len(), 10);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            SynthConfig { n_informative: 0, ..Default::default() },
            SynthConfig { n_informative: 201, ..Default::default() },
            SynthConfig { n_samples: 9, ..Default::default() },
            SynthConfig { flip_rate: 0.7, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        }
    }
}

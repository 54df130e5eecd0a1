//! Variational sequence model over feature-subset token sequences.
//!
//! The model has three parts that are trained jointly:
//!
//! * an encoder that maps a token sequence to a mean `m` and a log-scale `σ`,
//!   from which the embedding `e* = m + ε ⊙ exp(σ)` is drawn;
//! * an autoregressive decoder that rebuilds the sequence from `e*`;
//! * an evaluator that predicts the subset's utility from `e*`.
//!
//! Training runs in `f32` through candle's autograd. A trained model is
//! converted to `f64` for inference, latent gradients and decoding.

mod checkpoint;
mod model;
mod network;
mod params;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::SeqModel;
pub use train::{train, write_training_curve, EpochLosses};

/// Form of the latent regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlForm {
    /// `Σ exp(σ) − (1 + σ) + m²`.
    #[default]
    Verbatim,
    /// `½ Σ exp(2σ) − 1 − 2σ + m²`, the Gaussian KL when `exp(σ)` is the std.
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub latent_dim: usize,
    pub evaluator_hidden: usize,
    /// Longest token sequence the encoder accepts. `None` means
    /// `n_features + 2`.
    pub max_len: Option<usize>,
    pub variational: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            layers: 2,
            heads: 8,
            ff_dim: 256,
            latent_dim: 64,
            evaluator_hidden: 200,
            max_len: None,
            variational: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("layers", self.layers),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("latent_dim", self.latent_dim),
            ("evaluator_hidden", self.evaluator_hidden),
        ];
        for (name, value) in dims {
            if value == 0 {
                return Err(Error::Config(format!("model.{name} must be positive")));
            }
        }
        if self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "model.heads ({}) must divide model.embed_dim ({})",
                self.heads, self.embed_dim
            )));
        }
        if self.max_len == Some(0) {
            return Err(Error::Config("model.max_len must be positive".into()));
        }
        Ok(())
    }

    pub fn resolved_max_len(&self, n_features: usize) -> usize {
        self.max_len.unwrap_or(n_features + 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the reconstruction loss.
    pub alpha: f64,
    /// Weight of the evaluator loss.
    pub beta: f64,
    /// Weight of the latent regularizer.
    pub gamma: f64,
    /// Clamped to the number of records.
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub kl_form: KlForm,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 0.2,
            gamma: 0.001,
            batch_size: 1024,
            epochs: 400,
            learning_rate: 1e-4,
            kl_form: KlForm::Verbatim,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("train.{name} must be a finite value >= 0")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Encoder output for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPoint {
    pub m: Vec<f64>,
    /// Log-scale. Absent when the model is not variational.
    pub sigma: Option<Vec<f64>>,
    /// Set by [`LatentPoint::with_eps`].
    pub e_star: Option<Vec<f64>>,
}

impl LatentPoint {
    /// Returns a copy with `e_star` drawn from `eps`.
    pub fn with_eps(&self, eps: &[f64]) -> LatentPoint {
        let e_star = match &self.sigma {
            Some(sigma) => reparameterize(&self.m, sigma, eps),
            None => self.m.clone(),
        };
        LatentPoint {
            e_star: Some(e_star),
            ..self.clone()
        }
    }

    /// The embedding on the noise-free path.
    pub fn deterministic(&self) -> Vec<f64> {
        self.m.clone()
    }
}

/// `m + eps ⊙ exp(sigma)`.
pub fn reparameterize(m: &[f64], sigma: &[f64], eps: &[f64]) -> Vec<f64> {
    assert_eq!(m.len(), sigma.len());
    assert_eq!(m.len(), eps.len());
    m.iter()
        .zip(sigma)
        .zip(eps)
        .map(|((m, s), e)| m + e * s.exp())
        .collect()
}

/// Latent regularizer of one point. Zero for a non-variational point.
pub fn kl_loss(lp: &LatentPoint, form: KlForm) -> f64 {
    let Some(sigma) = &lp.sigma else {
        return 0.0;
    };
    let sum: f64 = lp
        .m
        .iter()
        .zip(sigma)
        .map(|(m, s)| match form {
            KlForm::Verbatim => s.exp() - (1.0 + s) + m * m,
            KlForm::Standard => (2.0 * s).exp() - 1.0 - 2.0 * s + m * m,
        })
        .sum();
    match form {
        KlForm::Verbatim => sum,
        KlForm::Standard => 0.5 * sum,
    }
}

/// Squared error of one utility prediction.
pub fn evaluator_loss(v: f64, predicted: f64) -> f64 {
    (v - predicted) * (v - predicted)
}

pub fn joint_loss(rec: f64, evt: f64, kl: f64, cfg: &TrainConfig) -> f64 {
    cfg.alpha * rec + cfg.beta * evt + cfg.gamma * kl
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// `−log softmax(logits)[target]`.
pub fn nll(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[target]
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

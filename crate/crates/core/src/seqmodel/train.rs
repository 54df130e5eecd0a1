//! Joint minibatch training of encoder, decoder and evaluator.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::SeqModel;
use super::network::{Batch, Network};
use super::params::{init_vars, Dims};
use super::{ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::record::SubsetRecord;
use crate::vocab::{Vocabulary, FIRST_FEATURE};

const TRAIN_DTYPE: DType = DType::F32;
const POOL_BATCHES: usize = 16;

/// Record-weighted mean of each loss term over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub rec: f64,
    pub evt: f64,
    pub kl: f64,
    pub joint: f64,
}

/// Trains a fresh model on `records` and returns it with the per-epoch
/// training curve.
pub fn train(
    records: &[SubsetRecord],
    vocab: &Vocabulary,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<(SeqModel, Vec<EpochLosses>)> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let max_len = model_cfg.resolved_max_len(vocab.n_features());
    let dims = Dims::new(model_cfg, vocab.size(), max_len);
    let probe = SeqModel::untrained(model_cfg, vocab.n_features(), 0)?;
    for r in records {
        probe.check_sequence(&r.sequence)?;
    }
    debug_assert_eq!(probe.vocab_size(), vocab.n_features() + FIRST_FEATURE as usize);

    let vars = init_vars(&dims, train_cfg.seed, TRAIN_DTYPE)?;
    let net = Network::new(
        dims,
        vars.iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect(),
    );
    let mut opt = AdamW::new(
        vars.values().cloned().collect(),
        ParamsAdamW {
            lr: train_cfg.learning_rate,
            weight_decay: 0.0,
            ..ParamsAdamW::default()
        },
    )?;

    let mut order_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    order_rng.set_stream(1);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    noise_rng.set_stream(2);

    let batch_size = train_cfg.batch_size.min(records.len());
    let mut curve = Vec::with_capacity(train_cfg.epochs);
    for epoch in 0..train_cfg.epochs {
        let batches = bucketed_batches(records, batch_size, &mut order_rng);
        let mut sums = [0.0f64; 4];
        for (b, idx) in batches.iter().enumerate() {
            let seqs: Vec<&[u32]> = idx.iter().map(|&i| records[i].sequence.tokens()).collect();
            let len = seqs.iter().map(|s| s.len()).max().unwrap_or(1);
            let batch = Batch::new(&seqs, len, TRAIN_DTYPE)?;
            let utilities: Vec<f32> = idx.iter().map(|&i| records[i].utility as f32).collect();
            let utilities = Tensor::from_vec(utilities, idx.len(), &Device::Cpu)?;
            let eps: Vec<f32> = (0..idx.len() * dims.latent)
                .map(|_| noise_rng.sample::<f32, _>(StandardNormal))
                .collect();
            let eps = Tensor::from_vec(eps, (idx.len(), dims.latent), &Device::Cpu)?;

            let losses = net.losses(&batch, &utilities, &eps, train_cfg.kl_form)?;
            let joint = ((losses.rec.clone() * train_cfg.alpha)?
                + (losses.evt.clone() * train_cfg.beta)?
                + (losses.kl.clone() * train_cfg.gamma)?)?;
            let values = [
                losses.rec.to_dtype(DType::F64)?.to_scalar::<f64>()?,
                losses.evt.to_dtype(DType::F64)?.to_scalar::<f64>()?,
                losses.kl.to_dtype(DType::F64)?.to_scalar::<f64>()?,
                joint.to_dtype(DType::F64)?.to_scalar::<f64>()?,
            ];
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NanLoss {
                    epoch,
                    batch: b,
                    detail: format!(
                        "rec={} evt={} kl={} joint={}",
                        values[0], values[1], values[2], values[3]
                    ),
                });
            }
            opt.backward_step(&joint)?;
            for (s, v) in sums.iter_mut().zip(values) {
                *s += v * idx.len() as f64;
            }
        }
        let n = records.len() as f64;
        let row = EpochLosses {
            epoch: epoch + 1,
            rec: sums[0] / n,
            evt: sums[1] / n,
            kl: sums[2] / n,
            joint: sums[3] / n,
        };
        log::debug!(
            "epoch {}: rec={:.4} evt={:.5} kl={:.4} joint={:.4}",
            row.epoch,
            row.rec,
            row.evt,
            row.kl,
            row.joint
        );
        curve.push(row);
        check_finite(&vars, epoch)?;
    }
    let model = SeqModel::from_network(model_cfg.clone(), train_cfg.clone(), net.to_dtype(TRAIN_DTYPE)?)?;
    Ok((model, curve))
}

/// Batches drawn at random while grouping records of similar length, so
/// that little compute goes to padding.
///
/// The shuffled records are cut into pools of `POOL_BATCHES` batches, each
/// pool is sorted by sequence length and split, and the batch order is
/// shuffled again.
fn bucketed_batches(
    records: &[SubsetRecord],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(rng);
    let mut batches = Vec::new();
    for pool in order.chunks_mut(batch_size * POOL_BATCHES) {
        pool.sort_by_key(|&i| records[i].sequence.len());
        batches.extend(pool.chunks(batch_size).map(|c| c.to_vec()));
    }
    batches.shuffle(rng);
    batches
}

fn check_finite(
    vars: &std::collections::BTreeMap<String, candle_core::Var>,
    epoch: usize,
) -> Result<()> {
    for (name, var) in vars {
        let total = var.as_tensor().sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        if !total.is_finite() {
            return Err(Error::NanLoss {
                epoch,
                batch: 0,
                detail: format!("parameter {name} became non-finite"),
            });
        }
    }
    Ok(())
}

/// Writes the curve as CSV with columns `epoch,L_rec,L_evt,L_kl,joint`.
pub fn write_training_curve(path: &Path, curve: &[EpochLosses]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["epoch", "L_rec", "L_evt", "L_kl", "joint"])
        .map_err(|e| csv_error(path, e))?;
    for row in curve {
        w.write_record([
            row.epoch.to_string(),
            row.rec.to_string(),
            row.evt.to_string(),
            row.kl.to_string(),
            row.joint.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

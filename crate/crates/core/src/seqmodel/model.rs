//! Trained model used for inference, latent gradients and decoding.

use candle_core::{DType, Device, Tensor, Var};

use super::network::{Batch, Network};
use super::params::Dims;
use super::{argmax, LatentPoint, ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::record::SubsetRecord;
use crate::sequence::{canonicalize, TokenSequence};
use crate::vocab::{EOS, FIRST_FEATURE, SOS};

/// Sequences per forward pass during batched inference.
const CHUNK: usize = 256;

/// A trained encoder, decoder and evaluator.
///
/// Immutable and safe to share between threads. Weights are kept in the
/// training precision for checkpoints and mirrored in `f64` for inference.
#[derive(Clone)]
pub struct SeqModel {
    pub(crate) model_cfg: ModelConfig,
    pub(crate) train_cfg: TrainConfig,
    pub(crate) stored: Network,
    net: Network,
}

impl std::fmt::Debug for SeqModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeqModel")
            .field("model_cfg", &self.model_cfg)
            .field("train_cfg", &self.train_cfg)
            .field("vocab_size", &self.vocab_size())
            .field("max_len", &self.max_len())
            .finish()
    }
}

impl SeqModel {
    pub(crate) fn from_network(
        model_cfg: ModelConfig,
        train_cfg: TrainConfig,
        stored: Network,
    ) -> Result<Self> {
        let net = stored.to_dtype(DType::F64)?;
        Ok(Self {
            model_cfg,
            train_cfg,
            stored,
            net,
        })
    }

    /// A model with freshly initialized weights, mostly for tests.
    pub fn untrained(
        model_cfg: &ModelConfig,
        n_features: usize,
        seed: u64,
    ) -> Result<Self> {
        model_cfg.validate()?;
        let dims = Dims::new(
            model_cfg,
            n_features + FIRST_FEATURE as usize,
            model_cfg.resolved_max_len(n_features),
        );
        let vars = super::params::init_vars(&dims, seed, DType::F32)?;
        let weights = vars
            .into_iter()
            .map(|(k, v)| (k, v.as_tensor().detach()))
            .collect();
        Self::from_network(
            model_cfg.clone(),
            TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            Network::new(dims, weights),
        )
    }

    /// Copy of the model with `bias` added to the output logit of `token`.
    #[cfg(test)]
    pub(crate) fn with_output_bias(&self, token: u32, bias: f32) -> Result<Self> {
        let mut weights = self.stored.weights().clone();
        let mut b = weights["out.b"].to_vec1::<f32>()?;
        b[token as usize] += bias;
        weights.insert("out.b".into(), Tensor::new(b, &Device::Cpu)?);
        Self::from_network(
            self.model_cfg.clone(),
            self.train_cfg.clone(),
            Network::new(self.stored.dims, weights),
        )
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.model_cfg
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.train_cfg
    }

    pub fn vocab_size(&self) -> usize {
        self.net.dims.vocab
    }

    pub fn n_features(&self) -> usize {
        self.vocab_size() - FIRST_FEATURE as usize
    }

    pub fn max_len(&self) -> usize {
        self.net.dims.max_len
    }

    pub fn latent_dim(&self) -> usize {
        self.net.dims.latent
    }

    pub fn is_variational(&self) -> bool {
        self.net.dims.variational
    }

    /// Checks that a sequence can be fed to the encoder.
    pub fn check_sequence(&self, seq: &TokenSequence) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::EmptySubset);
        }
        if seq.len() > self.max_len() {
            return Err(Error::SequenceTooLong {
                len: seq.len(),
                max_len: self.max_len(),
            });
        }
        let vocab_size = self.vocab_size();
        if let Some(&token) = seq
            .tokens()
            .iter()
            .find(|&&t| t < FIRST_FEATURE || t as usize >= vocab_size)
        {
            return Err(Error::UnknownToken { token, vocab_size });
        }
        Ok(())
    }

    fn batch(&self, seqs: &[&TokenSequence], len: Option<usize>) -> Result<Batch> {
        for s in seqs {
            self.check_sequence(s)?;
        }
        let longest = seqs.iter().map(|s| s.len()).max().unwrap_or(1);
        let len = len.unwrap_or(longest).min(self.max_len()).max(longest);
        let raw: Vec<&[u32]> = seqs.iter().map(|s| s.tokens()).collect();
        Batch::new(&raw, len, DType::F64)
    }

    fn latent_tensor(&self, es: &[&[f64]]) -> Result<Tensor> {
        let dim = self.latent_dim();
        let mut flat = Vec::with_capacity(es.len() * dim);
        for e in es {
            assert_eq!(e.len(), dim, "latent vector has the wrong dimension");
            flat.extend_from_slice(e);
        }
        Ok(Tensor::from_vec(flat, (es.len(), dim), &Device::Cpu)?)
    }

    pub fn encode(&self, seq: &TokenSequence) -> Result<LatentPoint> {
        Ok(self.encode_batch(std::slice::from_ref(seq))?.remove(0))
    }

    pub fn encode_batch(&self, seqs: &[TokenSequence]) -> Result<Vec<LatentPoint>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(CHUNK) {
            let refs: Vec<&TokenSequence> = chunk.iter().collect();
            let batch = self.batch(&refs, None)?;
            let (m, sigma) = self.net.encode(&batch.enc_ids, &batch.enc_mask)?;
            let m = m.to_vec2::<f64>()?;
            let sigma = sigma.map(|s| s.to_vec2::<f64>()).transpose()?;
            for (i, m) in m.into_iter().enumerate() {
                out.push(LatentPoint {
                    m,
                    sigma: sigma.as_ref().map(|s| s[i].clone()),
                    e_star: None,
                });
            }
        }
        Ok(out)
    }

    /// Logits of the token that follows `prefix`, which starts with SOS.
    pub fn decode_logits(&self, e: &[f64], prefix: &[u32]) -> Result<Vec<f64>> {
        assert_eq!(prefix.first(), Some(&SOS), "decoder prefix must start with SOS");
        if prefix.len() > self.max_len() + 1 {
            return Err(Error::SequenceTooLong {
                len: prefix.len() - 1,
                max_len: self.max_len(),
            });
        }
        let ids = Tensor::from_slice(prefix, (1, prefix.len()), &Device::Cpu)?;
        let logits = self.net.decode_logits(&ids, &self.latent_tensor(&[e])?)?;
        Ok(logits.get(0)?.get(prefix.len() - 1)?.to_vec1()?)
    }

    /// Summed NLL of `seq` followed by EOS under teacher forcing.
    pub fn reconstruction_loss(&self, e: &[f64], seq: &TokenSequence) -> Result<f64> {
        Ok(self.reconstruction_losses(&[e], &[seq.clone()], None)?[0])
    }

    /// Per-sequence reconstruction losses with the batch padded to at least
    /// `pad_to` positions, capped at `max_len`.
    pub fn reconstruction_losses(
        &self,
        es: &[&[f64]],
        seqs: &[TokenSequence],
        pad_to: Option<usize>,
    ) -> Result<Vec<f64>> {
        assert_eq!(es.len(), seqs.len());
        let refs: Vec<&TokenSequence> = seqs.iter().collect();
        let batch = self.batch(&refs, pad_to)?;
        let nll = self.net.sequence_nll(&batch, &self.latent_tensor(es)?)?;
        Ok(nll.to_vec1()?)
    }

    pub fn predict_utility(&self, e: &[f64]) -> Result<f64> {
        let out = self.net.evaluate(&self.latent_tensor(&[e])?)?;
        Ok(out.to_vec1::<f64>()?[0])
    }

    /// Evaluator value and its gradient with respect to the latent point.
    pub fn utility_gradient(&self, e: &[f64]) -> Result<(f64, Vec<f64>)> {
        let var = Var::from_tensor(&self.latent_tensor(&[e])?)?;
        let out = self.net.evaluate(var.as_tensor())?.sum_all()?;
        let grads = out.backward()?;
        let grad = grads
            .get(var.as_tensor())
            .expect("evaluator output depends on its input");
        Ok((out.to_scalar()?, grad.flatten_all()?.to_vec1()?))
    }

    /// Greedy decoding of raw tokens: stops after EOS or `max_len` tokens.
    /// The returned tokens include the EOS when one was produced.
    pub fn generate_raw(&self, es: &[&[f64]]) -> Result<Vec<Vec<u32>>> {
        let n = es.len();
        let latent = self.latent_tensor(es)?;
        let mut prefixes: Vec<Vec<u32>> = vec![vec![SOS]; n];
        let mut done = vec![false; n];
        for _ in 0..self.max_len() {
            let t = prefixes[0].len();
            let flat: Vec<u32> = prefixes.iter().flatten().copied().collect();
            let ids = Tensor::from_vec(flat, (n, t), &Device::Cpu)?;
            let logits = self.net.decode_logits(&ids, &latent)?.narrow(1, t - 1, 1)?;
            let logits = logits.squeeze(1)?.to_vec2::<f64>()?;
            for (i, row) in logits.iter().enumerate() {
                let next = if done[i] { EOS } else { argmax(row) as u32 };
                done[i] |= next == EOS;
                prefixes[i].push(next);
            }
            if done.iter().all(|d| *d) {
                break;
            }
        }
        Ok(prefixes
            .into_iter()
            .map(|mut p| {
                p.remove(0);
                if let Some(end) = p.iter().position(|&t| t == EOS) {
                    p.truncate(end + 1);
                }
                p
            })
            .collect())
    }

    /// Greedy decoding followed by canonicalization.
    pub fn generate(&self, e: &[f64]) -> Result<TokenSequence> {
        Ok(self.generate_batch(&[e])?.remove(0))
    }

    pub fn generate_batch(&self, es: &[&[f64]]) -> Result<Vec<TokenSequence>> {
        Ok(self
            .generate_raw(es)?
            .into_iter()
            .map(|raw| canonicalize(&TokenSequence::new(raw)))
            .collect())
    }

    /// Share of teacher-forced target positions, EOS included, whose argmax
    /// prediction from the mean embedding equals the target.
    pub fn teacher_forced_accuracy(&self, records: &[SubsetRecord]) -> Result<f64> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for chunk in records.chunks(CHUNK) {
            let refs: Vec<&TokenSequence> = chunk.iter().map(|r| &r.sequence).collect();
            let batch = self.batch(&refs, None)?;
            let (m, _) = self.net.encode(&batch.enc_ids, &batch.enc_mask)?;
            let predicted = self.net.decode_logits(&batch.dec_in, &m)?.argmax(2)?;
            let predicted = predicted.to_vec2::<u32>()?;
            let targets = batch.dec_tgt.to_vec2::<u32>()?;
            for (seq, (p, t)) in refs.iter().zip(predicted.iter().zip(&targets)) {
                let scored = seq.len() + 1;
                total += scored;
                correct += (0..scored).filter(|&i| p[i] == t[i]).count();
            }
        }
        if total == 0 {
            return Err(Error::EmptyRecords);
        }
        Ok(correct as f64 / total as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Tensor;

    #[test]
    fn uniform_decoder_loss_is_analytic() {
        let cfg = ModelConfig {
            embed_dim: 16,
            heads: 4,
            ff_dim: 32,
            latent_dim: 8,
            evaluator_hidden: 8,
            ..ModelConfig::default()
        };
        let model = SeqModel::untrained(&cfg, 9, 1).unwrap();
        let mut weights = model.stored.weights().clone();
        for name in ["out.w", "out.b"] {
            let zeros = Tensor::zeros(weights[name].shape(), DType::F32, &Device::Cpu).unwrap();
            weights.insert(name.to_string(), zeros);
        }
        let uniform = SeqModel::from_network(
            cfg,
            model.train_cfg.clone(),
            Network::new(model.stored.dims, weights),
        )
        .unwrap();
        let v = uniform.vocab_size() as f64;
        for tokens in [vec![3u32], vec![4, 8, 11], vec![3, 4, 5, 6, 7, 8, 9]] {
            let q = tokens.len() as f64;
            let loss = uniform
                .reconstruction_loss(&[0.3; 8], &TokenSequence::new(tokens))
                .unwrap();
            assert!((loss - (q + 1.0) * v.ln()).abs() < 1e-9);
        }
    }
}

//! Forward pass of the encoder, decoder and evaluator.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, D};

use super::params::Dims;
use super::KlForm;
use crate::error::Result;
use crate::vocab::{EOS, PAD, SOS};

/// Added to attention scores of positions that must not be attended.
const MASKED: f64 = -1e9;
const LN_EPS: f64 = 1e-5;

/// Padded tensors for a batch of token sequences.
pub(crate) struct Batch {
    /// `(B, L)` encoder input, PAD-filled.
    pub enc_ids: Tensor,
    /// `(B, L)` 1 for real tokens, 0 for PAD.
    pub enc_mask: Tensor,
    /// `(B, L+1)` decoder input `[SOS, t1, .., tq, PAD..]`.
    pub dec_in: Tensor,
    /// `(B, L+1)` targets `[t1, .., tq, EOS, PAD..]`.
    pub dec_tgt: Tensor,
    /// `(B, L+1)` 1 on the q+1 scored positions.
    pub dec_mask: Tensor,
}

impl Batch {
    /// Pads every sequence to `len`, which must cover the longest one.
    pub fn new(seqs: &[&[u32]], len: usize, dtype: DType) -> Result<Self> {
        let b = seqs.len();
        let mut enc = vec![PAD; b * len];
        let mut enc_mask = vec![0f64; b * len];
        let mut dec_in = vec![PAD; b * (len + 1)];
        let mut dec_tgt = vec![PAD; b * (len + 1)];
        let mut dec_mask = vec![0f64; b * (len + 1)];
        for (i, seq) in seqs.iter().enumerate() {
            assert!(seq.len() <= len);
            let row = i * len;
            let drow = i * (len + 1);
            dec_in[drow] = SOS;
            for (p, &t) in seq.iter().enumerate() {
                enc[row + p] = t;
                enc_mask[row + p] = 1.0;
                dec_in[drow + p + 1] = t;
                dec_tgt[drow + p] = t;
                dec_mask[drow + p] = 1.0;
            }
            dec_tgt[drow + seq.len()] = EOS;
            dec_mask[drow + seq.len()] = 1.0;
        }
        let dev = &Device::Cpu;
        Ok(Self {
            enc_ids: Tensor::from_vec(enc, (b, len), dev)?,
            enc_mask: Tensor::from_vec(enc_mask, (b, len), dev)?.to_dtype(dtype)?,
            dec_in: Tensor::from_vec(dec_in, (b, len + 1), dev)?,
            dec_tgt: Tensor::from_vec(dec_tgt, (b, len + 1), dev)?,
            dec_mask: Tensor::from_vec(dec_mask, (b, len + 1), dev)?.to_dtype(dtype)?,
        })
    }
}

/// Loss terms of a batch as scalar tensors.
pub(crate) struct BatchLosses {
    pub rec: Tensor,
    pub evt: Tensor,
    pub kl: Tensor,
}

#[derive(Clone)]
pub(crate) struct Network {
    pub dims: Dims,
    pub dtype: DType,
    weights: BTreeMap<String, Tensor>,
}

impl Network {
    pub fn new(dims: Dims, weights: BTreeMap<String, Tensor>) -> Self {
        let dtype = weights["tok_emb"].dtype();
        Self {
            dims,
            dtype,
            weights,
        }
    }

    /// Copy of the network in another precision.
    pub fn to_dtype(&self, dtype: DType) -> Result<Self> {
        let weights = self
            .weights
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.to_dtype(dtype)?.detach())))
            .collect::<Result<_>>()?;
        Ok(Self {
            dims: self.dims,
            dtype,
            weights,
        })
    }

    pub fn weights(&self) -> &BTreeMap<String, Tensor> {
        &self.weights
    }

    fn w(&self, name: &str) -> &Tensor {
        &self.weights[name]
    }

    fn linear(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        let w = self.w(&format!("{name}.w"));
        let b = self.w(&format!("{name}.b"));
        let mut out_shape = x.dims().to_vec();
        let in_dim = out_shape.pop().expect("linear input has a feature axis");
        let rows: usize = out_shape.iter().product();
        out_shape.push(w.dim(0)?);
        let y = (x.reshape((rows, in_dim))?.matmul(&w.t()?)? + self.rows_of(b, rows)?)?;
        Ok(y.reshape(out_shape)?)
    }

    /// `v` repeated as `rows` rows.
    ///
    /// Built as an outer product rather than a broadcast so that the
    /// gradient of `v` is a matrix product instead of a strided reduction.
    fn rows_of(&self, v: &Tensor, rows: usize) -> Result<Tensor> {
        let ones = Tensor::ones((rows, 1), self.dtype, &Device::Cpu)?;
        Ok(ones.matmul(&v.reshape((1, v.elem_count()))?)?)
    }

    fn layer_norm(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let d = *dims.last().expect("layer norm input has a feature axis");
        let x = x.reshape((x.elem_count() / d, d))?;
        let rows = x.dim(0)?;
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_mul(&(var + LN_EPS)?.sqrt()?.recip()?)?;
        let g = self.rows_of(self.w(&format!("{name}.g")), rows)?;
        let b = self.rows_of(self.w(&format!("{name}.b")), rows)?;
        Ok(((normed * g)? + b)?.reshape(dims)?)
    }

    /// `bias` broadcasts to `(B, heads, T, T)`.
    fn attention(&self, x: &Tensor, prefix: &str, bias: &Tensor) -> Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        let h = self.dims.heads;
        let dh = d / h;
        let split = |name: &str| -> Result<Tensor> {
            Ok(self
                .linear(x, &format!("{prefix}.attn.{name}"))?
                .reshape((b, t, h, dh))?
                .transpose(1, 2)?
                .contiguous()?)
        };
        let (q, k, v) = (split("q")?, split("k")?, split("v")?);
        let scores = (q.matmul(&k.t()?.contiguous()?)? * (1.0 / (dh as f64).sqrt()))?
            .broadcast_add(bias)?;
        let mixed = softmax_last(&scores)?
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, t, d))?;
        self.linear(&mixed, &format!("{prefix}.attn.o"))
    }

    fn block(&self, x: &Tensor, prefix: &str, bias: &Tensor) -> Result<Tensor> {
        let a = self.attention(&self.layer_norm(x, &format!("{prefix}.ln1"))?, prefix, bias)?;
        let x = (x + a)?;
        let hidden = self
            .linear(&self.layer_norm(&x, &format!("{prefix}.ln2"))?, &format!("{prefix}.ff1"))?
            .relu()?;
        let f = self.linear(&hidden, &format!("{prefix}.ff2"))?;
        Ok((x + f)?)
    }

    fn embed(&self, ids: &Tensor, pos: &str) -> Result<Tensor> {
        let (b, t) = ids.dims2()?;
        let tok = self
            .w("tok_emb")
            .index_select(&ids.flatten_all()?, 0)?
            .reshape((b, t, self.dims.embed))?;
        let pos = self.rows_of(&self.w(pos).narrow(0, 0, t)?, b)?;
        Ok((tok + pos.reshape((b, t, self.dims.embed))?)?)
    }

    /// Returns `(m, σ)`, each `(B, latent)`. `σ` is `None` for a
    /// non-variational network.
    pub fn encode(&self, ids: &Tensor, mask: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        let (b, t) = ids.dims2()?;
        let bias = ((mask - 1.0)? * -MASKED)?.reshape((b, 1, 1, t))?;
        let mut x = self.embed(ids, "enc.pos")?;
        for l in 0..self.dims.layers {
            x = self.block(&x, &format!("enc.{l}"), &bias)?;
        }
        let x = self.layer_norm(&x, "enc.ln_f")?;
        let weights = mask.unsqueeze(2)?;
        let counts = mask.sum_keepdim(1)?;
        let pooled = x.broadcast_mul(&weights)?.sum(1)?.broadcast_div(&counts)?;
        let m = self.linear(&pooled, "mu")?;
        let sigma = if self.dims.variational {
            Some(self.linear(&pooled, "sigma")?)
        } else {
            None
        };
        Ok((m, sigma))
    }

    /// Next-token logits `(B, T, V)` for decoder inputs `(B, T)` that start
    /// with SOS.
    pub fn decode_logits(&self, dec_in: &Tensor, e: &Tensor) -> Result<Tensor> {
        let (b, t) = dec_in.dims2()?;
        let latent = self.linear(e, "dec.latent")?.unsqueeze(1)?;
        let ones = Tensor::ones((b, t, 1), self.dtype, &Device::Cpu)?;
        let mut x = (self.embed(dec_in, "dec.pos")? + ones.matmul(&latent)?)?;
        let bias = causal_bias(t, self.dtype)?;
        for l in 0..self.dims.layers {
            x = self.block(&x, &format!("dec.{l}"), &bias)?;
        }
        let x = self.layer_norm(&x, "dec.ln_f")?;
        self.linear(&x, "out")
    }

    /// Predicted utility `(B,)`.
    pub fn evaluate(&self, e: &Tensor) -> Result<Tensor> {
        let h = self.linear(e, "evt.0")?.tanh()?;
        let h = self.linear(&h, "evt.1")?.tanh()?;
        Ok(self.linear(&h, "evt.2")?.squeeze(1)?)
    }

    /// Per-sequence summed NLL `(B,)` of the teacher-forced targets.
    pub fn sequence_nll(&self, batch: &Batch, e: &Tensor) -> Result<Tensor> {
        let logits = self.decode_logits(&batch.dec_in, e)?;
        let logp = log_softmax_last(&logits)?;
        let picked = logp.gather(&batch.dec_tgt.unsqueeze(2)?, 2)?.squeeze(2)?;
        Ok((picked * &batch.dec_mask)?.sum(1)?.neg()?)
    }

    /// Batch-mean loss terms with `e* = m + eps ⊙ exp(σ)`.
    pub fn losses(
        &self,
        batch: &Batch,
        utilities: &Tensor,
        eps: &Tensor,
        kl_form: KlForm,
    ) -> Result<BatchLosses> {
        let (m, sigma) = self.encode(&batch.enc_ids, &batch.enc_mask)?;
        let e_star = match &sigma {
            Some(s) => (&m + (eps * s.exp()?)?)?,
            None => m.clone(),
        };
        let rec = self.sequence_nll(batch, &e_star)?.mean_all()?;
        let evt = (self.evaluate(&e_star)? - utilities)?.sqr()?.mean_all()?;
        let kl = match &sigma {
            Some(s) => {
                let per_dim = match kl_form {
                    KlForm::Verbatim => ((s.exp()? - (s + 1.0)?)? + m.sqr()?)?,
                    KlForm::Standard => {
                        ((((s * 2.0)?.exp()? - 1.0)? - (s * 2.0)?)? + m.sqr()?)? * 0.5
                    }?,
                };
                per_dim.sum(1)?.mean_all()?
            }
            None => Tensor::zeros((), self.dtype, &Device::Cpu)?,
        };
        Ok(BatchLosses { rec, evt, kl })
    }
}

fn causal_bias(t: usize, dtype: DType) -> Result<Tensor> {
    let values: Vec<f64> = (0..t * t)
        .map(|i| if i % t > i / t { MASKED } else { 0.0 })
        .collect();
    Ok(Tensor::from_vec(values, (1, 1, t, t), &Device::Cpu)?.to_dtype(dtype)?)
}

fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_mul(&e.sum_keepdim(D::Minus1)?.recip()?)?)
}

fn log_softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

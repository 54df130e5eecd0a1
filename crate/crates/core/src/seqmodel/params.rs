//! Parameter layout and seeded initialization.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ModelConfig;
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    /// `U(−1/√fan_in, 1/√fan_in)`.
    Uniform { fan_in: usize },
    Normal,
    Ones,
    Zeros,
}

#[derive(Debug, Clone)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Geometry shared by the parameter layout and the forward pass.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Dims {
    pub vocab: usize,
    pub max_len: usize,
    pub embed: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff: usize,
    pub latent: usize,
    pub hidden: usize,
    pub variational: bool,
}

impl Dims {
    pub fn new(cfg: &ModelConfig, vocab: usize, max_len: usize) -> Self {
        Self {
            vocab,
            max_len,
            embed: cfg.embed_dim,
            layers: cfg.layers,
            heads: cfg.heads,
            ff: cfg.ff_dim,
            latent: cfg.latent_dim,
            hidden: cfg.evaluator_hidden,
            variational: cfg.variational,
        }
    }
}

fn linear(specs: &mut Vec<ParamSpec>, name: &str, fan_in: usize, fan_out: usize) {
    let init = Init::Uniform { fan_in };
    specs.push(ParamSpec {
        name: format!("{name}.w"),
        shape: vec![fan_out, fan_in],
        init,
    });
    specs.push(ParamSpec {
        name: format!("{name}.b"),
        shape: vec![fan_out],
        init,
    });
}

fn layer_norm(specs: &mut Vec<ParamSpec>, name: &str, dim: usize) {
    specs.push(ParamSpec {
        name: format!("{name}.g"),
        shape: vec![dim],
        init: Init::Ones,
    });
    specs.push(ParamSpec {
        name: format!("{name}.b"),
        shape: vec![dim],
        init: Init::Zeros,
    });
}

fn block(specs: &mut Vec<ParamSpec>, prefix: &str, d: &Dims) {
    layer_norm(specs, &format!("{prefix}.ln1"), d.embed);
    for proj in ["q", "k", "v", "o"] {
        linear(specs, &format!("{prefix}.attn.{proj}"), d.embed, d.embed);
    }
    layer_norm(specs, &format!("{prefix}.ln2"), d.embed);
    linear(specs, &format!("{prefix}.ff1"), d.embed, d.ff);
    linear(specs, &format!("{prefix}.ff2"), d.ff, d.embed);
}

/// Every trainable tensor, in initialization order.
pub(crate) fn param_specs(d: &Dims) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    specs.push(ParamSpec {
        name: "tok_emb".into(),
        shape: vec![d.vocab, d.embed],
        init: Init::Normal,
    });
    specs.push(ParamSpec {
        name: "enc.pos".into(),
        shape: vec![d.max_len, d.embed],
        init: Init::Normal,
    });
    for l in 0..d.layers {
        block(&mut specs, &format!("enc.{l}"), d);
    }
    layer_norm(&mut specs, "enc.ln_f", d.embed);
    linear(&mut specs, "mu", d.embed, d.latent);
    if d.variational {
        linear(&mut specs, "sigma", d.embed, d.latent);
    }
    specs.push(ParamSpec {
        name: "dec.pos".into(),
        shape: vec![d.max_len + 1, d.embed],
        init: Init::Normal,
    });
    linear(&mut specs, "dec.latent", d.latent, d.embed);
    for l in 0..d.layers {
        block(&mut specs, &format!("dec.{l}"), d);
    }
    layer_norm(&mut specs, "dec.ln_f", d.embed);
    linear(&mut specs, "out", d.embed, d.vocab);
    linear(&mut specs, "evt.0", d.latent, d.hidden);
    linear(&mut specs, "evt.1", d.hidden, d.hidden);
    linear(&mut specs, "evt.2", d.hidden, 1);
    specs
}

/// Creates freshly initialized trainable variables.
pub(crate) fn init_vars(d: &Dims, seed: u64, dtype: DType) -> Result<BTreeMap<String, Var>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vars = BTreeMap::new();
    for spec in param_specs(d) {
        let n: usize = spec.shape.iter().product();
        let values: Vec<f64> = match spec.init {
            Init::Uniform { fan_in } => {
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            }
            Init::Normal => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
            Init::Ones => vec![1.0; n],
            Init::Zeros => vec![0.0; n],
        };
        let tensor = Tensor::from_vec(values, spec.shape.as_slice(), &Device::Cpu)?.to_dtype(dtype)?;
        vars.insert(spec.name, Var::from_tensor(&tensor)?);
    }
    Ok(vars)
}

//! Safetensors checkpoints with the configuration stored in the header.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use super::model::SeqModel;
use super::network::Network;
use super::params::{param_specs, Dims};
use super::{ModelConfig, TrainConfig};
use crate::error::{Error, Result};

const FORMAT: &str = "latsel-seqmodel";
const VERSION: u32 = 1;
/// The whole header lives under one metadata key so that the file bytes do
/// not depend on hash-map iteration order.
const META_KEY: &str = "latsel";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    model_config: ModelConfig,
    train_config: TrainConfig,
    vocab_size: usize,
    max_len: usize,
}

pub fn save_checkpoint(model: &SeqModel, path: &Path) -> Result<()> {
    let dims = model.stored.dims;
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        model_config: model.model_cfg.clone(),
        train_config: model.train_cfg.clone(),
        vocab_size: dims.vocab,
        max_len: dims.max_len,
    };
    let meta = HashMap::from([(META_KEY.to_string(), serde_json::to_string(&header)?)]);
    safetensors::serialize_to_file(model.stored.weights().iter(), Some(meta), path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<SeqModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(|e| bad(e.to_string()))?;
    let meta = header
        .metadata()
        .as_ref()
        .ok_or_else(|| bad("missing metadata".into()))?;
    let text = meta
        .get(META_KEY)
        .ok_or_else(|| bad(format!("missing metadata field `{META_KEY}`")))?;
    let header: Header = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if header.format != FORMAT {
        return Err(bad("not a sequence model checkpoint".into()));
    }
    if header.version != VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    let (model_cfg, train_cfg) = (header.model_config, header.train_config);
    model_cfg.validate().map_err(|e| bad(e.to_string()))?;
    let (vocab, max_len) = (header.vocab_size, header.max_len);
    let dims = Dims::new(&model_cfg, vocab, max_len);

    let mut tensors = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)?;
    let mut weights = BTreeMap::new();
    for spec in param_specs(&dims) {
        let tensor = tensors
            .remove(&spec.name)
            .ok_or_else(|| bad(format!("missing tensor `{}`", spec.name)))?;
        if tensor.dims() != spec.shape.as_slice() {
            return Err(bad(format!(
                "tensor `{}` has shape {:?}, expected {:?}",
                spec.name,
                tensor.dims(),
                spec.shape
            )));
        }
        weights.insert(spec.name, tensor.to_dtype(DType::F32)?);
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(bad(format!("unexpected tensor `{extra}`")));
    }
    SeqModel::from_network(model_cfg, train_cfg, Network::new(dims, weights))
}

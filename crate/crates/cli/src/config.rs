//! The run configuration: one TOML file with a section per stage.

use std::path::{Path, PathBuf};

use latsel::augment::AugmentConfig;
use latsel::collector::CollectorConfig;
use latsel::downstream::EvalConfig;
use latsel::search::SearchConfig;
use latsel::seqmodel::{ModelConfig, TrainConfig};
use latsel::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Input dataset CSV. `run-all` and `ablate` synthesize one when unset.
    pub dataset: Option<PathBuf>,
    /// Records JSONL read by `augment`, `train` and `search`.
    pub records: Option<PathBuf>,
    /// Model checkpoint read by `search`.
    pub checkpoint: Option<PathBuf>,
    /// Output directory.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Every stage seed is set from it.
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub collector: CollectorConfig,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub search: SearchConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    /// Copies the master seed into every stage and validates all sections.
    pub fn resolve(mut self) -> CliResult<Self> {
        let s = self.seed;
        self.synth.seed = s;
        self.collector.seed = s;
        self.augment.seed = s;
        self.train.seed = s;
        self.eval.seed = s;
        self.synth.validate().map_err(input)?;
        self.collector.validate().map_err(input)?;
        self.model.validate().map_err(input)?;
        self.train.validate().map_err(input)?;
        self.search.validate().map_err(input)?;
        self.eval.validate().map_err(input)?;
        Ok(self)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("latsel-out"))
    }
}

fn input(e: latsel::Error) -> CliError {
    CliError::Input(e.to_string())
}

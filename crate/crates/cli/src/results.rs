//! The versioned results JSON of `run-all` and the per-command manifest.

use std::collections::BTreeMap;
use std::path::Path;

use latsel::{FoldMetrics, MetricsReport, TokenSequence};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const RESULTS_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Cross-validated metrics of one subset in the documented metrics layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsBlock {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub accuracy: f64,
    pub per_fold: Vec<FoldMetrics>,
    #[serde(default)]
    pub auc_undefined: bool,
    pub subset: Vec<u32>,
    pub subset_size: usize,
}

impl MetricsBlock {
    pub fn new(subset: &TokenSequence, report: MetricsReport) -> Self {
        Self {
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
            auc: report.auc,
            accuracy: report.accuracy,
            per_fold: report.per_fold,
            auc_undefined: report.auc_undefined,
            subset: subset.tokens().to_vec(),
            subset_size: subset.len(),
        }
    }

    fn check(&self, name: &str, folds: usize) -> Result<(), String> {
        let seq = TokenSequence::new(self.subset.clone());
        if seq.is_empty() || !seq.is_canonical() {
            return Err(format!("{name}.subset must be non-empty and canonical"));
        }
        if self.subset_size != self.subset.len() {
            return Err(format!("{name}.subset_size does not match the subset"));
        }
        if self.per_fold.len() != folds {
            return Err(format!("{name}.per_fold has {} folds, expected {folds}", self.per_fold.len()));
        }
        let values = [self.precision, self.recall, self.f1, self.auc, self.accuracy];
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format!("{name} has a metric outside [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSummary {
    pub n_samples: usize,
    pub n_features: usize,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSummary {
    pub seeds: usize,
    pub best_seed_utility: f64,
    pub decoded_points: usize,
    pub candidates: usize,
    pub predicted_utility: f64,
    pub measured_utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunResults {
    pub schema_version: u32,
    pub seed: u64,
    pub dataset: DatasetSummary,
    pub collected_records: usize,
    pub augmented_records: usize,
    pub search: SearchSummary,
    /// The subset returned by the latent search.
    pub chosen: MetricsBlock,
    /// Top F-statistic features, as many as in `chosen`.
    pub ftest: MetricsBlock,
    /// Every feature of the dataset.
    pub original: MetricsBlock,
}

impl RunResults {
    /// Structural checks run before every write.
    pub fn check(&self, folds: usize) -> Result<(), String> {
        if self.schema_version != RESULTS_SCHEMA_VERSION {
            return Err(format!("unknown schema_version {}", self.schema_version));
        }
        self.chosen.check("chosen", folds)?;
        self.ftest.check("ftest", folds)?;
        self.original.check("original", folds)?;
        if self.ftest.subset_size != self.chosen.subset_size {
            return Err("ftest subset size differs from the chosen subset size".into());
        }
        if self.original.subset_size != self.dataset.n_features {
            return Err("original subset is not the full feature set".into());
        }
        let text = serde_json::to_string(self).map_err(|e| e.to_string())?;
        let back: RunResults = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        if &back != self {
            return Err("results do not survive a JSON round trip".into());
        }
        Ok(())
    }

    pub fn write(&self, path: &Path, folds: usize) -> CliResult<()> {
        self.check(folds)
            .map_err(|e| CliError::Internal(format!("results schema check failed: {e}")))?;
        write_json(path, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Configuration snapshot, timings and output hashes of one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub timings: Vec<StageTiming>,
    /// SHA-256 of every output file, keyed by its path relative to the
    /// output directory.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Internal(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::write(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::write(path, e))
}

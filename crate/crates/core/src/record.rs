//! Subset/utility records, their JSONL file format, and cross-validated metrics.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::TokenSequence;

/// Utilities are kept at this many decimals so that in-memory and on-disk
/// values compare exactly.
pub const UTILITY_DECIMALS: i32 = 6;

pub fn round_utility(u: f64) -> f64 {
    let scale = 10f64.powi(UTILITY_DECIMALS);
    (u * scale).round() / scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRecord {
    #[serde(rename = "tokens")]
    pub sequence: TokenSequence,
    pub utility: f64,
}

impl SubsetRecord {
    pub fn new(sequence: TokenSequence, utility: f64) -> Result<Self> {
        if sequence.is_empty() {
            return Err(Error::EmptySubset);
        }
        if !(0.0..=1.0).contains(&utility) {
            return Err(Error::Config(format!("utility {utility} outside [0, 1]")));
        }
        Ok(Self {
            sequence,
            utility: round_utility(utility),
        })
    }
}

pub fn save_records(records: &[SubsetRecord], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(records, path)
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<SubsetRecord>> {
    let path = path.as_ref();
    let records: Vec<SubsetRecord> = read_jsonl(path)?;
    for (i, r) in records.iter().enumerate() {
        if r.sequence.is_empty() || !(0.0..=1.0).contains(&r.utility) {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!(
                    "record on line {} needs non-empty tokens and utility in [0, 1]",
                    i + 1
                ),
            });
        }
    }
    Ok(records)
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(items: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            column: format!("{}", e.column()),
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Binary classification metrics of one cross-validation fold. The positive
/// class is label 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub accuracy: f64,
    pub per_fold: Vec<FoldMetrics>,
    /// Set when some fold produced constant scores; its AUC is reported as 0.5.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub auc_undefined: bool,
}

impl MetricsReport {
    /// Aggregates folds by unweighted mean.
    pub fn from_folds(per_fold: Vec<FoldMetrics>, auc_undefined: bool) -> Self {
        let n = per_fold.len().max(1) as f64;
        let mean = |f: fn(&FoldMetrics) -> f64| per_fold.iter().map(f).sum::<f64>() / n;
        Self {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
            auc: mean(|m| m.auc),
            accuracy: mean(|m| m.accuracy),
            per_fold,
            auc_undefined,
        }
    }
}

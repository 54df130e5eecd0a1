//! Tabular binary-classification data and its CSV format.
//!
//! The CSV has a header row, one `label` column holding 0/1, and any number of
//! numeric feature columns in any position.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::sequence::TokenSequence;
use crate::vocab::Vocabulary;

pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    features: Array2<f64>,
    labels: Vec<u8>,
    feature_names: Vec<String>,
}

impl TabularDataset {
    pub fn new(features: Array2<f64>, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        let (n_samples, n_features) = features.dim();
        if n_samples < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 samples, got {n_samples}"
            )));
        }
        if n_features < 1 {
            return Err(Error::InvalidDataset("need at least 1 feature".into()));
        }
        if labels.len() != n_samples {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {n_samples} samples",
                labels.len()
            )));
        }
        if feature_names.len() != n_features {
            return Err(Error::InvalidDataset(format!(
                "{} feature names for {n_features} features",
                feature_names.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidDataset(format!("label {bad} is not 0/1")));
        }
        if let Some(((row, col), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value at row {row}, feature `{}`",
                feature_names[col]
            )));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
        })
    }

    /// Builds a dataset with generated names `f0, f1, ...`.
    pub fn from_matrix(features: Array2<f64>, labels: Vec<u8>) -> Result<Self> {
        let names = (0..features.ncols()).map(|j| format!("f{j}")).collect();
        Self::new(features, labels, names)
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(self.n_features())
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.features.column(j)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Number of samples with label 0 and label 1.
    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - ones, ones]
    }

    pub fn require_both_classes(&self) -> Result<()> {
        let [zeros, ones] = self.class_counts();
        if zeros == 0 || ones == 0 {
            return Err(Error::DegenerateLabels(format!(
                "{zeros} negatives and {ones} positives; both classes are required"
            )));
        }
        Ok(())
    }

    /// Column indices selected by a canonical, non-empty subset.
    pub fn subset_columns(&self, subset: &TokenSequence) -> Result<Vec<usize>> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        let vocab = self.vocabulary();
        subset
            .tokens()
            .iter()
            .map(|&t| {
                vocab.column(t).ok_or(Error::TokenOutOfRange {
                    token: t,
                    n_features: self.n_features(),
                })
            })
            .collect()
    }

    /// Keeps only the columns named by `subset`, in ascending token order.
    pub fn apply_subset(&self, subset: &TokenSequence) -> Result<TabularDataset> {
        let columns = self.subset_columns(subset)?;
        let features = self.features.select(Axis(1), &columns);
        let names = columns
            .iter()
            .map(|&j| self.feature_names[j].clone())
            .collect();
        Ok(TabularDataset {
            features,
            labels: self.labels.clone(),
            feature_names: names,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let header = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect::<Vec<_>>();
        let label_idx = header
            .iter()
            .position(|h| h == LABEL_COLUMN)
            .ok_or_else(|| Error::Schema {
                path: path.to_path_buf(),
                message: format!("missing `{LABEL_COLUMN}` column"),
            })?;
        let names: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != label_idx)
            .map(|(_, h)| h.clone())
            .collect();

        let mut values = Vec::new();
        let mut labels = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let parse_err = |column: &str, message: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                column: column.to_string(),
                message,
            };
            for (i, cell) in record.iter().enumerate() {
                let cell = cell.trim();
                let value: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(&header[i], format!("`{cell}` is not a number")))?;
                if !value.is_finite() {
                    return Err(parse_err(&header[i], format!("`{cell}` is not finite")));
                }
                if i == label_idx {
                    let label = match value {
                        v if v == 0.0 => 0,
                        v if v == 1.0 => 1,
                        _ => {
                            return Err(parse_err(&header[i], format!("label `{cell}` is not 0/1")))
                        }
                    };
                    labels.push(label);
                } else {
                    values.push(value);
                }
            }
        }
        let n_samples = labels.len();
        let features = Array2::from_shape_vec((n_samples, names.len()), values)
            .map_err(|e| Error::InvalidDataset(e.to_string()))?;
        Self::new(features, labels, names)
    }

    /// Writes the CSV contract with the label as the last column.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            for name in &self.feature_names {
                write!(out, "{name},")?;
            }
            writeln!(out, "{LABEL_COLUMN}")?;
            for (row, label) in self.features.rows().into_iter().zip(&self.labels) {
                for v in row {
                    write!(out, "{v},")?;
                }
                writeln!(out, "{label}")?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column: String::new(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn five_features() -> TabularDataset {
        let x = Array2::from_shape_fn((4, 5), |(i, j)| (i * 10 + j) as f64);
        TabularDataset::from_matrix(x, vec![0, 1, 0, 1]).unwrap()
    }

    fn seq(columns: &[usize]) -> TokenSequence {
        TokenSequence::new(columns.iter().map(|&c| c as u32 + 3).collect())
    }

    #[test]
    fn apply_subset_selects_columns() {
        let ds = five_features();
        let sub = ds.apply_subset(&seq(&[1, 3])).unwrap();
        assert_eq!(sub.n_features(), 2);
        assert_eq!(sub.labels(), ds.labels());
        assert_eq!(sub.column(0), ds.column(1));
        assert_eq!(sub.column(1), ds.column(3));
        assert_eq!(sub.feature_names(), &["f1", "f3"]);
    }

    #[test]
    fn apply_full_subset_is_identity() {
        let ds = five_features();
        assert_eq!(ds.apply_subset(&seq(&[0, 1, 2, 3, 4])).unwrap(), ds);
    }

    #[test]
    fn apply_subset_errors() {
        let ds = five_features();
        assert!(matches!(
            ds.apply_subset(&seq(&[7])),
            Err(Error::TokenOutOfRange { token: 10, n_features: 5 })
        ));
        assert!(matches!(
            ds.apply_subset(&TokenSequence::default()),
            Err(Error::EmptySubset)
        ));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(TabularDataset::from_matrix(array![[1.0]], vec![0]).is_err());
        assert!(TabularDataset::from_matrix(array![[1.0], [f64::NAN]], vec![0, 1]).is_err());
        assert!(TabularDataset::from_matrix(array![[1.0], [2.0]], vec![0, 2]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let x = array![[0.1, -2.5e-7], [3.0, 1.0 / 3.0], [7.25, 8.0]];
        let ds = TabularDataset::from_matrix(x, vec![1, 0, 1]).unwrap();
        ds.save_csv(&path).unwrap();
        assert_eq!(TabularDataset::load_csv(&path).unwrap(), ds);
    }

    #[test]
    fn csv_label_may_be_anywhere() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,label,b\n1,0,2\n3,1,4\n").unwrap();
        let ds = TabularDataset::load_csv(&path).unwrap();
        assert_eq!(ds.feature_names(), &["a", "b"]);
        assert_eq!(ds.labels(), &[0, 1]);
        assert_eq!(ds.column(1).to_vec(), vec![2.0, 4.0]);
    }

    #[test]
    fn csv_non_numeric_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b,label\n1,2,0\n3,oops,1\n").unwrap();
        match TabularDataset::load_csv(&path) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "b");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_nan_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,label\nNaN,0\n3,1\n").unwrap();
        assert!(matches!(
            TabularDataset::load_csv(&path),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn csv_missing_label_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b\n1,2\n3,4\n").unwrap();
        assert!(matches!(
            TabularDataset::load_csv(&path),
            Err(Error::Schema { .. })
        ));
    }
}

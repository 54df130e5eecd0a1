use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("feature subset is empty")]
    EmptySubset,
    #[error("token {token} does not map to a feature column (dataset has {n_features} features)")]
    TokenOutOfRange { token: u32, n_features: usize },
    #[error("{path}: line {line}, column `{column}`: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: String,
        message: String,
    },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("labels are degenerate: {0}")]
    DegenerateLabels(String),
    #[error("sequence of length {len} exceeds max_len {max_len}")]
    SequenceTooLong { len: usize, max_len: usize },
    #[error("token {token} is not a feature token of a vocabulary of size {vocab_size}")]
    UnknownToken { token: u32, vocab_size: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NanLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("record set is empty")]
    EmptyRecords,
    #[error("gradient ascent diverged at step {step} (|coordinate| > 1e6)")]
    DivergenceAbort { step: usize },
    #[error("every decoded candidate was empty")]
    NoValidCandidate,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (files, configs, data) rather
    /// than by a failure inside the pipeline.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Schema { .. }
                | Error::Config(_)
                | Error::InvalidDataset(_)
                | Error::DegenerateLabels(_)
                | Error::Io { .. }
                | Error::Checkpoint(_)
                | Error::TokenOutOfRange { .. }
                | Error::UnknownToken { .. }
                | Error::SequenceTooLong { .. }
                | Error::EmptyRecords
        )
    }
}

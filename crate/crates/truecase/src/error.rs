//! Crate-wide error type.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty example list")]
    EmptyExampleList,

    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("character id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },

    #[error("log_sum_exp of an empty vector")]
    EmptyVector,

    #[error("sequence length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("brute-force enumeration limited to length 16, got {len}")]
    SequenceTooLong { len: usize },

    #[error("loss is not finite ({value})")]
    NonFiniteLoss { value: f64 },

    #[error("gradient check failed: max relative error {max_rel_err:.3e} exceeds 1e-4")]
    GradCheckFailed { max_rel_err: f64 },

    #[error("non-finite gradient in parameter tensor `{tensor}`")]
    NonFiniteGradient { tensor: String },

    #[error("training diverged; last epoch with finite loss was {last_good_epoch}")]
    Diverged { last_good_epoch: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("corrupt checkpoint: bad {field}")]
    CorruptCheckpoint { field: &'static str },

    #[error("checkpoint format version {found} not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("non-finite value produced by layer {layer} ({kind})")]
    NonFinite { layer: usize, kind: &'static str },

    #[error("training diverged at round {round}, learner {learner}, step {step}: {source}")]
    TrainingDiverged {
        round: u32,
        learner: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("round {round} outside schedule range 1..={total}")]
    RoundOutOfRange { round: u32, total: u32 },

    #[error("sparsity {requested} would resurrect pruned parameters (mask already prunes {already} of {total})")]
    Resurrection {
        requested: f64,
        already: usize,
        total: usize,
    },

    #[error("sparsity must lie in [0, 1], got {0}")]
    InvalidSparsity(f64),

    #[error("not enough prunable parameters: need {needed}, only {available} eligible")]
    InsufficientEligible { needed: usize, available: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("attack harness: {0}")]
    Attack(String),

    #[error("model needs {needed} bytes, exceeding the {budget}-byte memory budget")]
    MemoryBudget { needed: usize, budget: usize },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Failures while decoding a sparse model file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected \"FSPW\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {found} (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("truncated file: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error(
        "popcount mismatch: header declares {declared} stored values, mask has {popcount} set bits"
    )]
    PopcountMismatch { declared: u64, popcount: u64 },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("model spec digest does not match the file")]
    SpecDigestMismatch,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

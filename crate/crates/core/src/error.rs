use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the crate.
///
/// Variants are grouped so the command-line front end can map them onto
/// distinct exit codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    QubitIndex { index: usize, n_qubits: usize },

    #[error("invalid entangling edge ({0}, {1})")]
    InvalidEdge(usize, usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("batch norm in train mode needs at least 2 samples, got {0}")]
    DegenerateBatch(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("idx parse error in {path}: {reason}")]
    IdxParse { path: PathBuf, reason: String },

    #[error("need at least {required} samples per set for a {dim}-dimensional embedding, got {got}")]
    SampleSize { required: usize, dim: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint truncated: {0}")]
    CheckpointTruncated(String),

    #[error("checkpoint corrupted: {0}")]
    CheckpointCorrupted(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the `qinr` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Contract(_)
            | Error::InvalidEdge(..)
            | Error::QubitIndex { .. }
            | Error::Shape(_) => 2,
            Error::Data(_) | Error::IdxParse { .. } | Error::SampleSize { .. } => 3,
            Error::NonFinite(_) | Error::Domain(_) | Error::DegenerateBatch(_) => 4,
            Error::CheckpointVersion { .. }
            | Error::CheckpointTruncated(_)
            | Error::CheckpointCorrupted(_) => 5,
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

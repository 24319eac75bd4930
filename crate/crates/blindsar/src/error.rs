//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("iteration did not converge (residual {residual:.3e})")]
    NonConvergence { residual: f64 },

    #[error("degenerate block: zero Frobenius norm")]
    DegenerateBlock,

    #[error("no reference echo: every block was degenerate")]
    NoReference,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no periodicity detected in the amplitude spectrum")]
    NoPeriodicity,

    #[error("no signal: all lines are zero")]
    NoSignal,

    #[error("insufficient blocks for rate fitting: {accepted} accepted, need at least 2")]
    InsufficientBlocks { accepted: usize },

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 bad input, 3 estimation failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::CorruptFile(_)
            | Error::UnsupportedFormat(_)
            | Error::Header(_) => 2,
            Error::NonConvergence { .. }
            | Error::DegenerateBlock
            | Error::NoReference
            | Error::InsufficientData(_)
            | Error::NoPeriodicity
            | Error::NoSignal
            | Error::InsufficientBlocks { .. } => 3,
            Error::Io(_) => 4,
        }
    }
}

use thiserror::Error;

/// Typed failure modes surfaced by the library. CLI exit codes map
/// usage problems to 2 and computation failures to 1.
#[derive(Debug, Error)]
pub enum Error {
    /// The lag leaves no site pairs inside the grid, so the sample
    /// autocovariance is undefined.
    #[error("ZeroOverlap: lag {lag:?} leaves no site pairs on grid {shape:?}")]
    ZeroOverlap { shape: Vec<usize>, lag: Vec<i64> },

    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),

    #[error("InvalidParam: {0}")]
    InvalidParam(String),

    /// A variance estimate came out negative where a square root is
    /// required (possible with the constant kernel).
    #[error("NegativeVarianceEstimate: {0}")]
    NegativeVarianceEstimate(f64),

    /// A per-block statistic failed; carries the block index.
    #[error("block {index}: {source}")]
    Block {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }

    /// True for errors caused by bad arguments rather than failed
    /// computation; drives the CLI's exit-code split.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParam(_) | Error::ShapeMismatch(_) | Error::Parse { .. }
        )
    }
}

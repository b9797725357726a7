use thiserror::Error;

pub type Result<T> = std::result::Result<T, LcpError>;

#[derive(Debug, Error)]
pub enum LcpError {
    /// A precondition on an argument was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Every kernel value at the anchor is zero, so no weight vector exists.
    #[error("anchor is isolated: all kernel values are zero")]
    AnchorIsolated,

    #[error("bandwidth calibration failed: {0}")]
    BandwidthDegenerate(String),

    #[error("regression fit failed: {0}")]
    FitDegenerate(String),

    #[error("tilted sampling failed: {0}")]
    TiltDegenerate(String),

    #[error("invalid specification `{input}`: {reason}")]
    Parse { input: String, reason: String },

    #[error("ingestion error at row {row}, column `{column}`: {reason}")]
    Ingest { row: usize, column: String, reason: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LcpError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        LcpError::Contract(msg.into())
    }

    pub(crate) fn parse(input: &str, reason: impl Into<String>) -> Self {
        LcpError::Parse {
            input: input.to_string(),
            reason: reason.into(),
        }
    }
}

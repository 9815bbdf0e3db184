//! Crate-wide error type.
//!
//! One enum keeps plumbing simple across the pipeline stages; variants are
//! grouped by the exit-code class they map to in the CLI (see
//! [`Error::exit_code`]).

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Configuration could not be parsed or failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// Tensor/matrix dimensions are inconsistent for the requested operation.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A fragment layout does not match the matrix it is applied to.
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    /// A value is outside the representable range (e.g. a weight magnitude
    /// that does not fit the quantization grid during mapping).
    #[error("range error: {0}")]
    Range(String),

    /// A compressed model violates one of its declared constraints.
    #[error("constraint verification failed: {0} violation(s)")]
    ConstraintViolations(usize),

    /// The self-test found a mismatch between the simulator and an oracle.
    #[error("oracle equivalence failed: {0}")]
    OracleMismatch(String),

    /// A pipeline stage was invoked before its upstream stage produced its
    /// artifacts, or an artifact failed its checksum.
    #[error("stage order violation: {0}")]
    StageOrder(String),

    /// An artifact file is missing or corrupt.
    #[error("artifact error: {0}")]
    Artifact(String),

    /// A binary container could not be decoded.
    #[error("container error: {0}")]
    Container(String),

    /// Training produced a non-finite loss or weight; a state snapshot has
    /// been written for inspection.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure outside of config validation.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI.
    ///
    /// * `2` — config/usage errors (bad config, unknown keys, stage order,
    ///   missing or corrupt artifacts)
    /// * `3` — constraint verification failure
    /// * `4` — oracle equivalence failure (self-test)
    /// * `1` — everything else (unexpected I/O, divergence, and similar)
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::StageOrder(_) | Error::Artifact(_) | Error::Container(_) => {
                2
            }
            Error::ConstraintViolations(_) => 3,
            Error::OracleMismatch(_) => 4,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_match_contract() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::StageOrder("x".into()).exit_code(), 2);
        assert_eq!(Error::ConstraintViolations(3).exit_code(), 3);
        assert_eq!(Error::OracleMismatch("x".into()).exit_code(), 4);
        assert_eq!(
            Error::Io(std::io::Error::new(std::io::ErrorKind::Other, "x")).exit_code(),
            1
        );
    }
}

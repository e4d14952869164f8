use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or model dimensions do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// An argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Input is degenerate (zero vector, empty series, all-zero weights).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// A round produced no client updates; the caller decides the policy.
    #[error("empty round: no client updates to aggregate")]
    EmptyRound,
    /// A programmed trace does not cover the requested round.
    #[error("participation trace exhausted: round {round} not covered by {rounds} recorded rounds")]
    TraceExhausted { round: usize, rounds: usize },
    /// A text artifact failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(context: impl Into<String>, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("ill-conditioned kernel: {0}")]
    IllConditionedKernel(String),

    #[error("undefined Q2: {0}")]
    UndefinedQ2(String),

    #[error("empty summary: {0}")]
    EmptySummary(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

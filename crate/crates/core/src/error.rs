use thiserror::Error;

/// Errors raised across the clustering engine, the corpus lab and the
/// evaluation harness.
#[derive(Debug, Error)]
pub enum PdhpError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent or invalid configuration (length mismatches, bad ranges).
    #[error("configuration error: {0}")]
    Config(String),
    /// A count would go negative, or another bookkeeping invariant broke.
    #[error("integrity error: {0}")]
    Integrity(String),
    /// A document arrived out of timestamp order.
    #[error("stream-order error: document at t={t} precedes t={last}")]
    StreamOrder { t: f64, last: f64 },
    /// A precondition on an input corpus did not hold.
    #[error("precondition error: {0}")]
    Precondition(String),
    /// Malformed corpus or result file.
    #[error("ingestion error at line {line}: {msg}")]
    Ingest { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PdhpError>;

//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("label must be 0 or 1, got {0}")]
    Label(f64),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("layer {index} ({kind}): {source}")]
    Layer {
        index: usize,
        kind: String,
        #[source]
        source: Box<Error>,
    },
    #[error("parameter set error: {0}")]
    ParameterSet(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("version mismatch: {0}")]
    Version(String),
    #[error("partition violation: {0}")]
    Partition(String),
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("metric undefined: {0}")]
    MetricUndefined(String),
    #[error("value {value} out of range for {what}")]
    Range { what: String, value: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

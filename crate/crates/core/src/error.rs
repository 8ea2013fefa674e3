//! Crate-wide error type.
//!
//! Three broad classes matter to callers: configuration problems (bad JSON,
//! inconsistent model definitions — CLI exit code 2), domain violations
//! (parameters outside the admissible box, out-of-range query times), and
//! numerical failures (singular information matrices and the like).

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: malformed JSON, unknown keys, inconsistent
    /// model definition, missing declared bounds, …
    #[error("configuration error: {0}")]
    Config(String),

    /// A parameter vector lies outside (or on the boundary of, where the
    /// interior is required) the admissible box, or has the wrong dimension.
    #[error("parameter domain error: {0}")]
    ParamDomain(String),

    /// Invalid runtime input: negative horizon, query time outside the
    /// record, neuron index out of range, mismatched lengths, …
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical operation failed (e.g. a singular or indefinite
    /// information matrix where a positive-definite one is required).
    #[error("numerical error: {0}")]
    Numerics(String),

    /// Underlying I/O failure while reading or writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure; carries line/column context.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Convenient result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code for this error: configuration-class problems exit 2.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

use alloc::string::String;

/// Errors raised by model construction, transforms and inference.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("cycle detected through edge {from} -> {to}")]
    Cycle { from: String, to: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("node `{node}` cannot be binary factorized: {reason}")]
    NonDecomposable { node: String, reason: String },
    #[error("unsupported conversion for node `{0}`: discrete or hybrid densification is not supported")]
    UnsupportedConversion(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("missing value for `{0}`")]
    MissingAssignment(String),
    #[error("factor scopes disagree on `{0}`")]
    ScopeMismatch(String),
    #[error("evidence has zero probability")]
    InconsistentEvidence,
    #[error("matrix is not symmetric positive definite (pivot {0})")]
    NotPositiveDefinite(usize),
    #[error("structural error: {0}")]
    Structure(String),
    #[error("size limit exceeded: {0}")]
    TooLarge(String),
}

pub type Result<T> = core::result::Result<T, Error>;

use std::io;

use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of range: {detail}")]
    Range { what: &'static str, detail: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("layer {layer}: {rule}")]
    Size { layer: usize, rule: String },

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("malformed {format} data: {msg}")]
    Format { format: &'static str, msg: String },

    #[error("image too small: {0}")]
    ImageTooSmall(String),

    /// An output position that no fragment covers. Never happens for valid inputs.
    #[error("reassembly invariant violated: {0}")]
    Coverage(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn range(what: &'static str, detail: impl Into<String>) -> Error {
    Error::Range {
        what,
        detail: detail.into(),
    }
}

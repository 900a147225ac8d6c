use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent configuration: channel/group mismatch, bad resolution, bad weights.
    #[error("configuration error: {0}")]
    Config(String),

    /// Tensor dimensions incompatible with the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// Malformed file contents. `offset` is the byte position where decoding failed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    /// A non-finite value was produced while evaluating `layer`.
    #[error("numeric error in {layer}: {message}")]
    Numeric { layer: String, message: String },

    /// A quantity that is undefined for the given input (e.g. a mean over zero pixels).
    #[error("undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn format_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: msg.into(),
    }
}

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map onto the failure categories surfaced by the library:
/// configuration problems, circuit construction, tensor shape mismatches,
/// bad input data, file loading, numeric faults during training, and
/// protocol violations in the federation loop.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("circuit construction error: {0}")]
    Circuit(String),

    #[error("unsupported template: {0}")]
    UnsupportedTemplate(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("load error in {path} at byte {offset}: {message}")]
    Load {
        path: String,
        offset: u64,
        message: String,
    },

    #[error("numeric fault: {0}")]
    Numeric(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

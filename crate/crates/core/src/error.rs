use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The configuration text could not be parsed (carries the parser's line/column report).
    #[error("syntax error: {0}")]
    Syntax(String),

    /// The configuration parsed but violates an invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A binary or structured file does not follow its format.
    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite membrane potential in layer {layer}, neuron {neuron}")]
    NumericOverflow { layer: usize, neuron: usize },

    #[error("cost library has no entry for {0}")]
    MissingComponent(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A file or record does not match the declared schema.
    #[error("schema error in {location}: {message}")]
    Schema { location: String, message: String },

    /// Raw data violates an ingestion invariant (e.g. time going backwards).
    #[error("ingestion error in {location}: {message}")]
    Ingestion { location: String, message: String },

    /// Invalid user-supplied configuration. `field` names the offending setting.
    #[error("configuration error ({field}): {message}")]
    Config { field: String, message: String },

    #[error("preprocessing error in column `{column}`: {message}")]
    Preprocess { column: String, message: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {message}")]
    Divergence {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("state error: {0}")]
    State(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn shape(message: impl Into<String>) -> Self {
        Error::Shape(message.into())
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 2 = configuration, 3 = numeric failure, 4 = I/O, data or shape.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Divergence { .. } | Error::Domain(_) => 3,
            Error::Schema { .. }
            | Error::Ingestion { .. }
            | Error::Preprocess { .. }
            | Error::Shape(_)
            | Error::State(_)
            | Error::Format(_)
            | Error::Io { .. } => 4,
        }
    }
}

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Sim(#[from] cotrack::Error),
    #[error("invalid plan: `{field}` {reason}")]
    Plan { field: String, reason: String },
    #[error("cannot parse config {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("figure `{figure}` is missing {missing}")]
    MissingData { figure: &'static str, missing: String },
}

impl Error {
    pub(crate) fn plan(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Plan {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

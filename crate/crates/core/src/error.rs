use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("window {window} does not divide frame count {frames}")]
    WindowMismatch { window: usize, frames: usize },

    #[error("k = {k} must satisfy 1 <= k < n = {n}")]
    NeighborCount { k: usize, n: usize },

    #[error("class {class} has more than one active instance in label frame {frame}")]
    DuplicateInstance { frame: usize, class: usize },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error on {axis}: expected {expected}, got {actual}")]
    Dimension {
        axis: String,
        expected: usize,
        actual: usize,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration error at line {line}: {message}")]
    ConfigLine { line: usize, message: String },

    #[error("state error: {0}")]
    State(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("weight error for layer `{layer}`: {message}")]
    Weight { layer: String, message: String },

    #[error("weight file error: {0}")]
    WeightFile(#[from] WeightFileError),

    #[error("decode error in {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(axis: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            axis: axis.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable tag used by the CLI diagnostic prefix and the C error codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } | Error::Shape(_) => "dimension",
            Error::Config(_) | Error::ConfigLine { .. } => "config",
            Error::State(_) => "state",
            Error::Input(_) => "input",
            Error::Weight { .. } => "weight",
            Error::WeightFile(_) => "weight-file",
            Error::Decode { .. } => "decode",
            Error::Divergence { .. } => "divergence",
            Error::Io { .. } | Error::Csv(_) => "io",
        }
    }
}

/// Failures while reading a `VGGW` weight file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeightFileError {
    #[error("bad magic bytes {found:?}, expected \"VGGW\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("architecture mismatch: file is {file}, graph is {graph}")]
    Architecture { file: String, graph: String },

    #[error("task mismatch: file has task id {file}, graph expects {graph}")]
    Task { file: u8, graph: u8 },

    #[error("unknown architecture id {0}")]
    UnknownArchitecture(u8),

    #[error("unknown task id {0}")]
    UnknownTask(u8),

    #[error("truncated payload while reading {context}")]
    Truncated { context: String },

    #[error("shape mismatch for layer `{layer}`: file has {file:?}, graph expects {graph:?}")]
    ShapeMismatch {
        layer: String,
        file: Vec<usize>,
        graph: Vec<usize>,
    },

    #[error("missing entry for layer `{layer}`")]
    MissingLayer { layer: String },

    #[error("unexpected entry `{layer}` not present in the graph")]
    UnexpectedLayer { layer: String },

    #[error("duplicate entry `{layer}`")]
    DuplicateLayer { layer: String },

    #[error("entry name is not valid UTF-8")]
    BadName,

    #[error("{extra} trailing bytes after the last entry")]
    TrailingBytes { extra: usize },
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{origin}: line {line}: parse error: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },

    #[error("{origin}: line {line}: invalid field `{field}`: {message}")]
    Validation {
        origin: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("{origin}: line {line}: embedding dimension {found}, expected {expected}")]
    Dimension {
        origin: String,
        line: usize,
        found: usize,
        expected: usize,
    },

    #[error("{origin}: line {line}: embedding references missing detection (frame {frame}, index {det_index})")]
    Link {
        origin: String,
        line: usize,
        frame: u64,
        det_index: usize,
    },

    #[error("adapter failure: {0}")]
    Adapter(String),

    #[error("detections from mixed frames: expected frame {expected}, found {found}")]
    Sequencing { expected: u64, found: u64 },

    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("numeric instability: {0}")]
    NumericInstability(String),

    #[error("insufficient data: need at least {needed} points, got {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("layout optimization diverged: {0}")]
    Diverged(String),

    #[error("{message}")]
    Data { message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error::Data {
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 3 for configuration problems, 2 for
    /// everything attributable to input data or I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 3,
            Error::AtFrame { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

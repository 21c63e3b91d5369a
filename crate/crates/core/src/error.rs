use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record or text file failed to parse; `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("invalid acquisition record: {0}")]
    InvalidRecord(String),

    #[error("invalid mode set: {0}")]
    InvalidModeSet(String),

    #[error("unsupported mode-set schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("spectral estimation: {0}")]
    Spectral(String),

    #[error("correlation estimation: {0}")]
    Correlation(String),

    #[error("loewner data: {0}")]
    LoewnerData(String),

    #[error("singular pencil at order {order}: {reason}")]
    SingularPencil { order: usize, reason: String },

    #[error("stabilisation sweep failed at every order: {}", .diagnostics.join("; "))]
    AllOrdersFailed { diagnostics: Vec<String> },

    /// Identification ran but no stable mode survived.
    #[error("no modes found: {0}")]
    NoModes(String),

    #[error("modal assurance criterion undefined: {0}")]
    Mac(String),

    #[error("sensor placement: {0}")]
    Placement(String),

    #[error("finite-element model: {0}")]
    FiniteElement(String),

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Process exit status for each failure class; 0 is success.
pub mod exit {
    pub const INTERNAL: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const MISSING_FILE: i32 = 3;
    pub const NO_MODES: i32 = 4;
    pub const DATA: i32 = 5;
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => exit::MISSING_FILE,
            Error::Io { .. } => exit::INTERNAL,
            Error::InvalidConfig(_) => exit::USAGE,
            Error::NoModes(_) => exit::NO_MODES,
            _ => exit::DATA,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

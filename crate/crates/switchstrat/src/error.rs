use std::path::PathBuf;

/// Everything that can stop a command. [`AppError::exit_code`] maps
/// configuration problems to 2 and everything else to 1.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: DataError,
    },
    #[error(transparent)]
    Model(#[from] switchstrat_core::Error),
    #[error("{0}")]
    Runtime(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Model(switchstrat_core::Error::Config(_)) => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }
}

/// Problems with a CSV input file.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("record {id}: {description}")]
    InvariantViolation { id: u64, description: String },
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("{0}")]
    Other(String),
}

impl From<switchstrat_core::Error> for DataError {
    fn from(e: switchstrat_core::Error) -> Self {
        match e {
            switchstrat_core::Error::InvariantViolation { id, description } => DataError::InvariantViolation { id, description },
            other => DataError::Other(other.to_string()),
        }
    }
}

pub type Result<T, E = AppError> = std::result::Result<T, E>;

use std::path::PathBuf;

use permsel_core::ErrorClass;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: year {year} does not follow {previous}; years must be consecutive")]
    Gap {
        path: PathBuf,
        line: u64,
        year: i64,
        previous: i64,
    },

    #[error("{path}:{line}: count {value} in year {year} must be positive")]
    NonPositiveCount {
        path: PathBuf,
        line: u64,
        year: i64,
        value: f64,
    },

    #[error("{context}: {source}")]
    Core {
        context: String,
        source: permsel_core::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn core(context: impl Into<String>, source: permsel_core::Error) -> Self {
        CliError::Core {
            context: context.into(),
            source,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Parse { .. } | CliError::Gap { .. } | CliError::NonPositiveCount { .. } => EXIT_DATA,
            CliError::Core { source, .. } => match source.class() {
                ErrorClass::Config => EXIT_CONFIG,
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Numerical => EXIT_NUMERICAL,
            },
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

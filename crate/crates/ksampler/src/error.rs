use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("config {path}:{line}: {msg}")]
    Config { path: PathBuf, line: usize, msg: String },
    #[error(transparent)]
    Core(#[from] ksampler_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }

    /// Process exit code: 2 config, 3 numeric failure, 4 infeasible budget,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use ksampler_core::Error as C;
        match self {
            Error::Config { .. } | Error::Core(C::Invalid(_)) => 2,
            Error::Core(C::Numeric(_)) => 3,
            Error::Core(C::Budget(_)) => 4,
            _ => 1,
        }
    }
}

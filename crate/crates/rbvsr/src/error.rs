use std::path::{Path, PathBuf};

use rbvsr_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("UnreadableSource: {0}")]
    UnreadableSource(String),
    #[error("VersionMismatch: file has format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("CorruptFile: {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("IoError: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("ImageError: {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("ExternalToolError: {0}")]
    External(String),
    #[error("JsonError: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Io { path, source }
    }

    pub fn corrupt(path: impl AsRef<Path>, reason: impl Into<String>) -> Error {
        Error::Corrupt {
            path: path.as_ref().to_path_buf(),
            reason: reason.into(),
        }
    }

    /// Process exit code: 2 for bad input the user can fix by changing
    /// arguments, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnreadableSource(_) => 2,
            Error::Core(
                CoreError::BadIndex(_)
                | CoreError::InvalidConfig(_)
                | CoreError::BadRatios(_)
                | CoreError::EmptyCorpus,
            ) => 2,
            _ => 1,
        }
    }
}

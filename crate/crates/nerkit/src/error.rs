use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad flags, config keys or values.
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Input { path: PathBuf, source: nerkit_core::Error },
    #[error("sentence {sentence}: {message}")]
    Alignment { sentence: usize, message: String },
    #[error("model archive: {0}")]
    Archive(String),
    #[error(transparent)]
    Core(#[from] nerkit_core::Error),
}

impl Error {
    /// 2 for usage and configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Read { .. } | Error::Core(nerkit_core::Error::Usage(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

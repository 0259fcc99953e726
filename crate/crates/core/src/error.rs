use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::text::TokenizerConfig;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("duplicate paragraph identifier ({doc_id}, {para_index})")]
    DuplicateParagraph { doc_id: String, para_index: u32 },

    #[error("tokenizer config mismatch: index built with {index:?}, query side uses {query:?}")]
    TokenizerMismatch {
        index: TokenizerConfig,
        query: TokenizerConfig,
    },

    #[error("unsupported index format version {found} (this build reads version {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("corrupt index file {}: {message}", path.display())]
    Corrupt { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<Path>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn corrupt(path: impl AsRef<Path>, message: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.as_ref().to_path_buf(),
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}

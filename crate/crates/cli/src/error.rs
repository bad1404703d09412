use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("model does not match the container: {0}")]
    ModelBinding(String),

    #[error(transparent)]
    Codec(#[from] bucketzip::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FLAGGED: i32 = 2;
pub const EXIT_USAGE: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_FORMAT: i32 = 5;
pub const EXIT_DECODE: i32 = 6;
pub const EXIT_OTHER: i32 = 7;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use bucketzip::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::ModelBinding(_) => EXIT_FORMAT,
            CliError::Codec(e) => match e {
                E::Io(_) => EXIT_IO,
                E::Format { .. } | E::Checksum { .. } | E::UnknownToken { .. } | E::InvalidToken { .. } => EXIT_FORMAT,
                E::TruncatedStream { .. } | E::DecodeIntegrity { .. } | E::ReplayUnderrun { .. } => EXIT_DECODE,
                E::InvalidRational(_) | E::InvalidPartition(_) | E::InvalidCode(_) => EXIT_USAGE,
                _ => EXIT_OTHER,
            },
        }
    }
}

pub fn read(path: &std::path::Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn write(path: &std::path::Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

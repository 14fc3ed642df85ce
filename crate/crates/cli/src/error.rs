use std::path::{Path, PathBuf};

use pcf_core::PcfError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: PcfError },
    #[error("origin selection fell back for every coordinate system")]
    Fallback,
    #[error(transparent)]
    Pipeline(#[from] PcfError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Fallback => 4,
            CliError::Pipeline(e) => match e {
                PcfError::InvalidParameter(_) => 2,
                PcfError::Io(_)
                | PcfError::Image(_)
                | PcfError::Json(_)
                | PcfError::Csv(_)
                | PcfError::BadMagic { .. }
                | PcfError::TruncatedFile { .. }
                | PcfError::Unsupported { .. } => 3,
                _ => 1,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches the file path to errors from reading or writing it.
pub trait AtPath<T> {
    fn at(self, path: &Path) -> CliResult<T>;
}

impl<T> AtPath<T> for pcf_core::Result<T> {
    fn at(self, path: &Path) -> CliResult<T> {
        self.map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

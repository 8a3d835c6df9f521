use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::ingest::{IngestError, TradingDate};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline failure, categorized for the process exit status.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: IngestError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("data gap on {date}{}: {reason}", bucket.as_deref().map(|b| format!(" [{b}]")).unwrap_or_default())]
    DataGap {
        date: TradingDate,
        bucket: Option<String>,
        reason: String,
    },
    #[error("no usable observations")]
    NoObservations,
}

impl Error {
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. } => 3,
            Error::DataGap { .. } | Error::NoObservations => 4,
            Error::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

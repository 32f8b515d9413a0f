//! Configuration, energy traces, VTK snapshots and verification summaries.

pub mod config;
pub mod csv;
pub mod summary;
pub mod vtk;

use std::path::PathBuf;
use thiserror::Error;

/// File-system failure tagged with the offending path.
#[derive(Debug, Error)]
#[error("{path}: {source}")]
pub struct IoError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

impl IoError {
    pub(crate) fn at(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> IoError {
        let path = path.into();
        move |source| IoError { path, source }
    }
}

/// Malformed content in a file this crate wrote or reads.
#[derive(Debug, Error)]
pub enum ParseError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

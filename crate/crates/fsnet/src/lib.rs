//! File formats, reports, and the command-line front end for `fsnet-core`.
//!
//! | module | contents |
//! |---|---|
//! | [`delimited`] | CSV/TSV datasets |
//! | [`artifact`] | model files and their preprocessing sidecars |
//! | [`report`] | per-epoch training tables and evaluation documents |
//! | [`manifest`] | run manifests with input digests |
//! | [`config`] | TOML configuration files and flag precedence |
//! | [`cli`] | the `fsnet` command |

pub mod artifact;
pub mod cli;
pub mod config;
pub mod delimited;
pub mod manifest;
pub mod report;
pub mod textdoc;

use std::path::Path;

/// Failure to read or write one of the crate's file formats.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged { line: u64, expected: usize, found: usize },
    #[error("line {line}, column {column}: {message}")]
    Cell { line: u64, column: usize, message: String },
    #[error("line {line}: {message}")]
    Corrupt { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] fsnet_core::Error),
    #[error("{0}")]
    Invalid(String),
}

impl FormatError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

//! Everything `digitnet` needs beyond pure math: run configs, dataset and
//! checkpoint files, PGM image decoding, the training/detection drivers,
//! and the experiment sweep. The numerics live in `digitnet-core`; this
//! crate owns the filesystem and the process boundary.

use std::path::PathBuf;

pub mod checkpoint;
pub mod config;
pub mod pgm;
pub mod run;
pub mod sweep;

/// Errors surfaced to the command line, in three severity families:
/// the caller's fault (bad flags, bad config — exit 1), the data's fault
/// (unreadable or malformed files — exit 2), and numeric or training
/// failures (exit 3).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Core(#[from] digitnet_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("pgm: {0}")]
    Pgm(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl CliError {
    /// Process exit code for this error: 1 for usage/config mistakes,
    /// 2 for data problems, 3 for numeric or training failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::Io { .. } | CliError::Pgm(_) | CliError::Checkpoint(_) => 2,
            CliError::GradCheck(_) => 3,
            CliError::Core(e) => core_exit_code(e),
        }
    }

    /// Shorthand for wrapping an IO failure with the path it happened on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> CliError {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Core errors split the same way: config contract violations are the
/// caller's fault (1), malformed dataset bytes are data problems (2), and
/// everything else — geometry, shape, numeric breakdowns mid-training —
/// is a training failure (3).
fn core_exit_code(e: &digitnet_core::Error) -> i32 {
    use digitnet_core::Error as E;
    match e {
        E::InvalidConfig(_) => 1,
        E::BadMagic { .. }
        | E::PayloadLength { .. }
        | E::CountMismatch { .. }
        | E::LabelOutOfRangeAt { .. }
        | E::InsufficientSamples { .. }
        | E::DegenerateData => 2,
        E::AtSample { source, .. } => core_exit_code(source),
        _ => 3,
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

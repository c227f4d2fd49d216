//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the simulator library.
#[derive(Debug, Error)]
pub enum CoreError {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Depth estimation found too few usable patches.
    #[error("no depth: {0}")]
    NoDepth(String),

    /// A vehicle tried to submit while a task was still in flight.
    #[error("vehicle {0} already has an in-flight task")]
    Busy(u32),

    /// Replay buffer does not yet hold enough transitions to sample.
    #[error("replay not ready: holds {have}, need {need}")]
    NotReady { have: usize, need: usize },

    /// Regression fit could not be solved even with the ridge term.
    #[error("fit error: {0}")]
    Fit(String),

    /// Configuration file failed schema or semantic validation.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// Unknown algorithm name passed to the experiment harness.
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),

    /// A local map received a delta out of sequence and needs a resync.
    #[error("delta sequence gap: expected {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CoreError::InvalidInput(msg.into())
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CoreError::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;

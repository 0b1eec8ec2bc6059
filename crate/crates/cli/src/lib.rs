//! Command implementations behind the `spectformer` binary: train, eval,
//! count, ablate, dump-filters, predict. Kept as a library so the
//! acceptance suite can drive commands in-process.

pub mod commands;
pub mod runconfig;

use std::fmt;

/// Command failure with its process exit code: usage/config problems exit
/// 2, a NaN-loss abort exits 3, anything else exits 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    NanAbort(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::NanAbort(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::NanAbort(m) | CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<spectformer_core::Error> for CliError {
    fn from(e: spectformer_core::Error) -> Self {
        match e {
            spectformer_core::Error::Config(m) => CliError::Config(m),
            nan @ spectformer_core::Error::NanLoss { .. } => CliError::NanAbort(nan.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

//! Experiment presets, configuration, and file emitters behind the `ifslab`
//! binary.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;
pub mod stats;

use ifslab_core::IfsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] IfsError),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("degenerate variance: input {0} is constant")]
    DegenerateVariance(&'static str),
}

impl CliError {
    /// Process exit code: 1 for bad input or configuration, 2 for numerical
    /// failures of the estimators themselves.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::DegenerateVariance(_) => 2,
            CliError::Core(e) => match e {
                IfsError::InvalidArgument(_)
                | IfsError::MalformedRow { .. }
                | IfsError::Io(_)
                | IfsError::IndivisibleBatch { .. }
                | IfsError::DimensionMismatch { .. }
                | IfsError::DimensionTooLarge { .. }
                | IfsError::NotPositiveDefinite => 1,
                _ => 2,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), message: e.to_string() }
}

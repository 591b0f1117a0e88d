//! Command-line front end for `drot-core`: the `OTMX` matrix format, run
//! configuration, the solve/gen/profile/bench commands and the color
//! transfer demo.

pub mod args;
pub mod bench;
pub mod color;
pub mod config;
pub mod matrix_io;
pub mod profile;
pub mod roundtrip;
pub mod run;
pub mod solvers;

use thiserror::Error;

pub use config::{parse_run_config, ConfigError, RunConfig, Solver, Stopping};
pub use matrix_io::MatrixIoError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Matrix(#[from] MatrixIoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver error: {0}")]
    Solver(#[from] drot_core::OtError),
    #[error(transparent)]
    Color(#[from] color::ColorError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.display().to_string(), source }
    }
}

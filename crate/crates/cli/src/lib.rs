//! The `evacflow` command-line tool: dataset generation and cleaning,
//! training, transfer, evaluation, prediction, gradient checks,
//! multi-seed experiments and congestion-map export, plus the model file
//! format they share.

pub mod artifact;
pub mod cli;
pub mod commands;
pub mod config;
mod error;

pub use artifact::{ArtifactError, ModelArtifact, FORMAT_VERSION};
pub use cli::Cli;
pub use commands::run;
pub use error::{exit, CliError, Result};

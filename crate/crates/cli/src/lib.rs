//! Library side of the `cnlr` binary: argument types, the JSON run report
//! and one function per subcommand.

pub mod args;
mod commands;

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use cnlr_core::data::Standardization;
use cnlr_core::TransformKind;

pub use args::Cli;
pub use commands::run;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;
pub const EXIT_VERIFY_FAILED: i32 = 5;

/// Top-level JSON document printed by `fit`, `verify`, `compare` and `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config_echo: Value,
    pub results: Value,
    pub wall_time_ms: u64,
    pub version: String,
}

/// Fitted model as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub weights: Vec<f64>,
    pub transform: TransformKind,
    /// A trailing constant feature was appended during training.
    #[serde(default)]
    pub add_bias: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<Standardization>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] cnlr_core::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}

pub(crate) fn emit_json(out: &mut dyn Write, report: &RunReport) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, report)?;
    writeln!(out)?;
    Ok(())
}

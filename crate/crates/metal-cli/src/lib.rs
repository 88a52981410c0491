//! Experiment runner around `metal-core`: dataset files, checkpoints,
//! manifests, result tables, and the `metal` command-line tool.

pub mod checkpoint;
pub mod compare;
pub mod dataset;
pub mod experiment;
pub mod manifest;
pub mod synth;

use std::fmt;

/// Errors split by exit code: configuration problems exit with 2,
/// runtime failures with 1.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration; carries every diagnostic found.
    Config(Vec<String>),
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(vec![msg.into()])
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(diags) => {
                writeln!(f, "configuration invalid ({} problem(s)):", diags.len())?;
                for d in diags {
                    writeln!(f, "  - {d}")?;
                }
                Ok(())
            }
            CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<metal_core::Error> for CliError {
    fn from(e: metal_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

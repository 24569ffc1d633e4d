use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config field `{field}`: {msg}")]
    Validation { field: String, msg: String },
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{stage}: guard abort: {msg}")]
    Guard { stage: String, msg: String },
    #[error("{stage}: {msg}")]
    Compute { stage: String, msg: String },
    #[error("{path}: line {line}: {msg}")]
    Csv { path: String, line: usize, msg: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn field(field: &str, msg: impl Into<String>) -> Self {
        CliError::Validation { field: field.into(), msg: msg.into() }
    }

    pub fn compute(stage: &str, e: impl std::fmt::Display) -> Self {
        CliError::Compute { stage: stage.into(), msg: e.to_string() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } | CliError::Syntax { .. } | CliError::Csv { .. } => 2,
            CliError::Guard { .. } => 3,
            CliError::Compute { .. } | CliError::Io { .. } => 1,
        }
    }
}

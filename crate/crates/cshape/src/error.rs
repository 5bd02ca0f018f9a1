use std::fmt::Display;
use std::path::Path;

use serde::Serialize;

/// Broad class of a failure, reported in the structured error and mapped to
/// the exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Schema violation or inconsistent settings.
    Config,
    /// Missing or malformed input file.
    Input,
    /// Error raised by the numerical core.
    Domain,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Input => 3,
            ErrorKind::Domain => 4,
            ErrorKind::Io => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
#[error("{kind:?} error: {message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Config, message)
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Input, message)
    }

    pub fn domain(e: impl Display) -> Self {
        Self::new(ErrorKind::Domain, e.to_string())
    }

    pub fn io(path: &Path, e: impl Display) -> Self {
        Self::new(ErrorKind::Io, format!("{}: {e}", path.display()))
    }

    /// One-line JSON report for stderr.
    pub fn report(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

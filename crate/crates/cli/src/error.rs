use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Domain(String),

    #[error("{message}")]
    Io { path: Option<PathBuf>, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Usage(_) => 64,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Domain(_) => "domain",
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
        }
    }

    /// Single-line JSON for standard error.
    pub fn to_json(&self) -> String {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let CliError::Io { path: Some(p), .. } = self {
            v["path"] = json!(p.display().to_string());
        }
        v.to_string()
    }

    /// Attaches `path` to an I/O error that does not name one yet.
    pub fn at(self, path: &Path) -> Self {
        match self {
            CliError::Io { path: None, message } => CliError::Io {
                message: format!("{}: {message}", path.display()),
                path: Some(path.to_path_buf()),
            },
            other => other,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io { path: None, message: e.to_string() }
    }
}

impl From<nmqd_core::Error> for CliError {
    fn from(e: nmqd_core::Error) -> Self {
        if e.is_io() {
            CliError::Io { path: None, message: e.to_string() }
        } else {
            CliError::Domain(e.to_string())
        }
    }
}

impl From<nmqd_neural::Error> for CliError {
    fn from(e: nmqd_neural::Error) -> Self {
        if e.is_io() {
            CliError::Io { path: None, message: e.to_string() }
        } else {
            CliError::Domain(e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Domain(format!("invalid JSON: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Tags I/O failures with the file they concern.
pub trait PathContext<T> {
    fn at(self, path: &Path) -> Result<T>;
}

impl<T, E: Into<CliError>> PathContext<T> for std::result::Result<T, E> {
    fn at(self, path: &Path) -> Result<T> {
        self.map_err(|e| e.into().at(path))
    }
}

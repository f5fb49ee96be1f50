use std::path::PathBuf;

use thiserror::Error;

/// A config problem, located by line (0 for `--set` overrides) and key.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{location}: {reason}")]
pub struct ConfigError {
    pub line: usize,
    pub key: String,
    pub reason: String,
    location: String,
}

impl ConfigError {
    pub fn at(line: usize, key: &str, reason: impl Into<String>) -> Self {
        let location = match (line, key.is_empty()) {
            (0, true) => "config".to_string(),
            (0, false) => format!("`{key}`"),
            (l, true) => format!("line {l}"),
            (l, false) => format!("line {l}, `{key}`"),
        };
        Self { line, key: key.to_string(), reason: reason.into(), location }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),

    #[error("physics error: {0}")]
    Physics(#[from] icc_core::Error),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// 1 for config errors, 2 for physics errors, 3 for I/O errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Physics(_) => 2,
            Self::Io { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Physics(_) => "physics",
            Self::Io { .. } => "io",
        }
    }
}

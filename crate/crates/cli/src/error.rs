use std::path::Path;

use pgfn_tensor::{Checkpoint, LoadError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("version mismatch: {0}")]
    VersionMismatch(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact(_) | CliError::VersionMismatch(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::MissingArtifact(_) => "missing_artifact",
            CliError::VersionMismatch(_) => "version_mismatch",
            CliError::Runtime(_) => "runtime",
        }
    }

    /// One-line JSON error record.
    pub fn record(&self) -> String {
        serde_json::json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": self.to_string() }).to_string()
    }
}

pub fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn read_artifact(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingArtifact(path.display().to_string()),
        _ => runtime(format!("{}: {e}", path.display())),
    })
}

pub fn write_artifact(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Loads a checkpoint and checks its model kind.
pub fn load_checkpoint(path: &Path, kind: &str) -> Result<Checkpoint, CliError> {
    let ck = Checkpoint::load(path).map_err(|e| match e {
        LoadError::Io(e) if e.kind() == std::io::ErrorKind::NotFound => {
            CliError::MissingArtifact(path.display().to_string())
        }
        LoadError::Io(e) => runtime(format!("{}: {e}", path.display())),
        LoadError::Format(e) => CliError::VersionMismatch(format!("{}: {e}", path.display())),
    })?;
    ck.expect_kind(kind).map_err(|e| CliError::VersionMismatch(format!("{}: {e}", path.display())))?;
    Ok(ck)
}

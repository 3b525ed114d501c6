//! Process-level error taxonomy mapped to exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable config, or missing inputs. Exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// A pipeline stage failed after configuration checked out. Exit code 3.
    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
}

impl CliError {
    pub fn stage(stage: &str, err: impl std::fmt::Display) -> Self {
        CliError::Stage {
            stage: stage.to_string(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { .. } => 3,
        }
    }
}

/// Fail-fast input check: stages must not write anything before their
/// inputs are known to exist.
pub fn require_input(path: &std::path::Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "missing input path: {}",
            path.display()
        )))
    }
}

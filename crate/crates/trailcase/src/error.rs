use std::path::PathBuf;

use thiserror::Error;

/// Engine-wide error type. Variants are grouped into three classes that map
/// onto process exit codes: configuration problems (1), data problems (2),
/// and internal failures (3).
#[derive(Debug, Error)]
pub enum EngineError {
    // --- configuration-class errors ---------------------------------------
    #[error("config: {0}")]
    Config(String),
    #[error("config file {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },
    #[error("identity map {path}: {message}")]
    IdentityMap { path: PathBuf, message: String },
    #[error(
        "identity map: overlapping leases for ip {ip}: [{first_from} .. {first_to}] and [{second_from} .. {second_to}]"
    )]
    LeaseOverlap {
        ip: String,
        first_from: String,
        first_to: String,
        second_from: String,
        second_to: String,
    },

    // --- data-class errors -------------------------------------------------
    #[error("data: {0}")]
    Data(String),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },

    // --- internal-class errors ---------------------------------------------
    #[error("internal: {0}")]
    Internal(String),
    #[error("results store is locked by another run ({path})")]
    Locked { path: PathBuf },
    #[error("model fitting failed: {0}")]
    Fit(#[from] sparsefit::Error),
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl EngineError {
    /// Process exit code for this error: 1 config, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            EngineError::Config(_)
            | EngineError::ConfigFile { .. }
            | EngineError::IdentityMap { .. }
            | EngineError::LeaseOverlap { .. } => 1,
            EngineError::Data(_) | EngineError::Io { .. } => 2,
            EngineError::Internal(_)
            | EngineError::Locked { .. }
            | EngineError::Fit(_)
            | EngineError::Serialize(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, EngineError>;

pub(crate) fn io_err(path: impl Into<PathBuf>, err: std::io::Error) -> EngineError {
    EngineError::Io {
        path: path.into(),
        message: err.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(EngineError::Config("x".into()).exit_code(), 1);
        assert_eq!(EngineError::Data("x".into()).exit_code(), 2);
        assert_eq!(EngineError::Internal("x".into()).exit_code(), 3);
        assert_eq!(
            EngineError::Locked {
                path: PathBuf::from("/tmp/x"),
            }
            .exit_code(),
            3
        );
    }
}

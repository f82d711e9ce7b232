use thiserror::Error;

/// Failures mapped to process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid or unreadable configuration, incompatible checkpoint, dimension cap.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical failure inside the pipeline.
    #[error("numerical failure: {0}")]
    Numeric(String),
    /// Writing artifacts failed.
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    pub fn io(context: impl std::fmt::Display, e: std::io::Error) -> CliError {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl From<tnhvp::Error> for CliError {
    fn from(e: tnhvp::Error) -> Self {
        match e {
            tnhvp::Error::InvalidArgument(_) | tnhvp::Error::DimensionCap { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

use thiserror::Error;

/// Process exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SPEC: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid spec: {0}")]
    Spec(String),
    /// Oracle checks or repetitions failed.
    #[error("{0}")]
    Check(String),
    #[error(transparent)]
    Core(#[from] gamo_core::Error),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Spec(_) => EXIT_SPEC,
            Self::Core(gamo_core::Error::Config(_)) => EXIT_SPEC,
            _ => EXIT_CHECK,
        }
    }
}

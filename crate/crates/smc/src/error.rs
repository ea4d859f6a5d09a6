use serde_json::json;
use smc_core::SmcError;

/// Exit 2 for bad configuration, 3 for failures while running.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{code}: {message}")]
    Config { code: &'static str, message: String },
    #[error("{0}")]
    Runtime(#[from] SmcError),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn config(code: &'static str, message: impl Into<String>) -> Self {
        CliError::Config { code, message: message.into() }
    }

    pub fn io(e: impl std::fmt::Display) -> Self {
        CliError::Io(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Runtime(_) | CliError::Io(_) => 3,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config { code, .. } => code,
            CliError::Runtime(e) => e.code(),
            CliError::Io(_) => "io",
        }
    }

    /// One-line machine-readable form.
    pub fn to_json(&self) -> String {
        let message = match self {
            CliError::Config { message, .. } => message.clone(),
            CliError::Runtime(e) => e.to_string(),
            CliError::Io(m) => m.clone(),
        };
        json!({ "error": self.code(), "message": message }).to_string()
    }
}

use thiserror::Error;

/// Error type shared across the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("state error: {0}")]
    State(String),

    #[error("accuracy error: {0}")]
    Accuracy(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("solver failure at step {step}: {message}")]
    StepFailure { step: usize, message: String },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("audit failure: {0}")]
    Audit(String),

    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: &str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Process exit code category used by the CLI: config errors 2,
    /// solver errors 3, audit errors 4.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::Config { .. } => 2,
            Error::Audit(_) => 4,
            Error::Io(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

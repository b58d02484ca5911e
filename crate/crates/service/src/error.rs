use nof1_core::Error as CoreError;
use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("trial {0} not found")]
    NotFound(String),

    #[error("{0}")]
    Conflict(String),

    #[error("{0}")]
    Sequence(String),

    #[error("outcome {value} violates the bound |y| <= {bound}")]
    BoundViolation { value: f64, bound: f64 },

    #[error("trial already has all {k_max} blocks")]
    TrialComplete { k_max: usize },

    #[error("{0}")]
    IncompleteBlock(String),

    #[error("event log corrupt at seq {seq}: {message}")]
    Replay { seq: u64, message: String },

    #[error("storage error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(CoreError),
}

impl From<CoreError> for ServiceError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidConfig { field, message } => {
                ServiceError::Validation { field: field.to_string(), message }
            }
            CoreError::TrialComplete { k_max } => ServiceError::TrialComplete { k_max },
            CoreError::BoundViolation { value, bound } => ServiceError::BoundViolation { value, bound },
            other => ServiceError::Core(other),
        }
    }
}

impl ServiceError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Validation { .. } => "validation_error",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Sequence(_) => "sequence_error",
            ServiceError::BoundViolation { .. } => "bound_violation",
            ServiceError::TrialComplete { .. } => "trial_complete",
            ServiceError::IncompleteBlock(_) => "incomplete_block",
            ServiceError::Replay { .. } => "replay_error",
            ServiceError::Io(_) => "storage_error",
            ServiceError::Core(_) => "internal_error",
        }
    }

    /// HTTP status class.
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::Validation { .. } | ServiceError::BoundViolation { .. } => 422,
            ServiceError::NotFound(_) => 404,
            ServiceError::Conflict(_)
            | ServiceError::Sequence(_)
            | ServiceError::TrialComplete { .. }
            | ServiceError::IncompleteBlock(_) => 409,
            ServiceError::Replay { .. } | ServiceError::Io(_) | ServiceError::Core(_) => 500,
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            ServiceError::Validation { field, .. } => Some(field),
            ServiceError::BoundViolation { .. } => Some("y"),
            _ => None,
        }
    }

    pub fn validation(field: &str, message: impl Into<String>) -> Self {
        ServiceError::Validation { field: field.to_string(), message: message.into() }
    }
}

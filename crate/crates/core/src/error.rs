use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {message}")]
    InvalidConfig { field: &'static str, message: String },

    #[error("trial already has all {k_max} blocks")]
    TrialComplete { k_max: usize },

    #[error("propensity {g} is outside the open interval (0, 1)")]
    PositivityViolation { g: f64 },

    #[error("path enumeration is limited to K <= {max}, got K = {k}")]
    EnumerationLimit { k: usize, max: usize },

    #[error("block has no outcomes")]
    EmptyBlock,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no block observed yet in the {arm} arm")]
    ArmNotYetObserved { arm: &'static str },

    #[error("invalid pair: {0}")]
    InvalidPair(String),

    #[error("assignment does not follow the design: {0}")]
    DesignMismatch(String),

    #[error("operation not defined for the {0} scheme")]
    SchemeMismatch(&'static str),

    #[error("path {index} is malformed: {reason}")]
    InvalidPath { index: usize, reason: String },

    #[error("index out of range: {0}")]
    IndexError(String),

    #[error("outcome {value} violates the bound |y| <= {bound}")]
    BoundViolation { value: f64, bound: f64 },

    #[error("simulated trial {trial_index} failed: {source}")]
    TrialFailed { trial_index: u64, source: Box<Error> },
}

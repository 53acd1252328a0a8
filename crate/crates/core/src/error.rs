use thiserror::Error;

/// Errors raised by the simulation toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("event at t={event} precedes committed time t={committed}")]
    CausalityViolation { event: f64, committed: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rate must be positive, got {0}")]
    NonPositiveRate(f64),

    #[error("rate must be nonnegative, got {0}")]
    NegativeRate(f64),

    #[error("index {index} out of range for {len} components")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("no active components (aggregate rate is zero)")]
    NoActiveComponents,

    #[error("unknown rate class {0}")]
    UnknownClass(usize),

    #[error("overlap between {left} and {right} at t={time}: gap {gap}")]
    Overlap {
        left: usize,
        right: usize,
        time: f64,
        gap: f64,
    },

    #[error("time {requested} is before last update {last}")]
    TimeInPast { requested: f64, last: f64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("unknown call id {0}")]
    UnknownCall(u64),

    #[error("event dependency graph contains a cycle")]
    CyclicDependency,

    #[error("synchronous relaxation did not converge within {cap} iterations on step starting at t={step_start}")]
    IterationCapExceeded { cap: usize, step_start: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimError {
    fn from(err: std::io::Error) -> Self {
        SimError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;

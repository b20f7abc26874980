use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite component in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("scenario shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("time {0} is not a node of the time grid")]
    OffGrid(f64),

    #[error("empty support for the dissipative-velocity density")]
    EmptySupport,

    #[error("{flagged} of {total} steps exceeded the residual-gap tolerance")]
    TooManyFlaggedSteps { flagged: usize, total: usize },

    #[error("sign condition violated: min of phi(z) + phi^*w(z') is {min_value} < -{tolerance}")]
    HypothesisDViolated { min_value: f64, tolerance: f64 },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed record: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

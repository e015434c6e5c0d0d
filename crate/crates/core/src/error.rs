use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix block {block} is not positive definite ({what})")]
    NotPositiveDefinite { what: &'static str, block: usize },

    #[error("linear solve residual {residual:.3e} exceeds tolerance (condition estimate {condition:.3e})")]
    ResidualTooLarge { residual: f64, condition: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("dense system of dimension {dim} exceeds the limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("stage {stage}: {source}")]
    Stage { stage: usize, source: Box<Error> },

    #[error("CFL violation: {0}")]
    Cfl(String),

    #[error("non-finite value detected at step {step}")]
    NonFinite { step: usize },

    #[error("eigenvalue iteration did not converge")]
    EigenFailure,

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

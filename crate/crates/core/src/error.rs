use crate::Vector;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("graph generation failed after {attempts} attempts (m={m}, p={p})")]
    GenerationFailure { m: usize, p: f64, attempts: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("diverged at iteration {k}: {reason}")]
    Diverged { k: usize, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("did not converge within {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NotConverged {
        iterations: usize,
        grad_norm: f64,
        best: Vector,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("no convergent stepsize in grid of {0} points")]
    NoConvergentStepsize(usize),

    #[error("invalid comparison: {0}")]
    ComparisonInvalid(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI. Converged or budget-exhausted runs exit with 0.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::InvalidSize(_) => 2,
            Error::Data(_) | Error::Format(_) | Error::InsufficientData(_) => 3,
            Error::Diverged { .. } | Error::Numeric(_) => 4,
            Error::NoConvergentStepsize(_) => 5,
            Error::ComparisonInvalid(_) => 6,
            Error::NotConverged { .. } => 7,
            Error::GenerationFailure { .. } => 8,
            Error::Shape(_) => 9,
            Error::Io(_) => 1,
        }
    }
}

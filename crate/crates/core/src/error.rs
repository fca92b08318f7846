use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbcError {
    #[error("degenerate weights: sum of squared weights {0} leaves no covariance divisor")]
    DegenerateWeights(f64),
    #[error("conditioning block is singular")]
    SingularConditioning,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NonSymmetric(f64),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("zero or negative variance at coordinate {0}")]
    ZeroVariance(usize),
    #[error("invalid variance {0}")]
    InvalidVariance(f64),
    #[error("invalid degrees of freedom {0}")]
    InvalidDof(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("value outside domain: {0}")]
    Domain(String),
    #[error("no particle from the previous iteration beats the new threshold (N0 = 0)")]
    EmptySubset,
    #[error("proposal budget of {budget} exhausted at iteration {iteration} with {accepted} particles accepted")]
    Stall {
        iteration: usize,
        budget: u64,
        accepted: usize,
    },
    #[error("sample size {size} exceeds the cap of {cap}")]
    SizeCap { size: usize, cap: usize },
    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, AbcError>;

impl From<std::io::Error> for AbcError {
    fn from(err: std::io::Error) -> Self {
        AbcError::Io(err.to_string())
    }
}

impl From<csv::Error> for AbcError {
    fn from(err: csv::Error) -> Self {
        AbcError::Io(err.to_string())
    }
}

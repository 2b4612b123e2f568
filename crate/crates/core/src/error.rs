use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Structurally malformed input: ragged arrays, wrong matrix sizes, counts that disagree.
    #[error("dimension error in `{field}`: {detail}")]
    Dimension { field: String, detail: String },

    /// The model parsed but violates admissibility bounds.
    #[error("model failed validation: {0}")]
    Validation(String),

    /// A precondition of an operation does not hold.
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("matrix is numerically singular: {0}")]
    Singular(String),

    /// Imaginary part lost positive definiteness where it is required.
    #[error("positivity lost: {0}")]
    Positivity(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// An η-continuation broke down; the last η that still converged is reported.
    #[error("continuation failed at eta = {eta:e} (last converged eta: {last_converged:?}): {source}")]
    Continuation {
        eta: f64,
        last_converged: Option<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("problem too large for dense materialization: {size} > {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dimension(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dimension {
            field: field.into(),
            detail: detail.into(),
        }
    }
}

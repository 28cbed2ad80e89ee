use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("non-finite simulator output at point {index} {point:?}: {detail}")]
    NonFiniteOutput { index: usize, point: Vec<f64>, detail: String },

    #[error("simulation failed at sample {index}: {detail}")]
    Simulation { index: usize, detail: String },

    #[error("metric extraction: {0}")]
    Metric(String),

    #[error("external simulator protocol error: {0}")]
    Protocol(String),

    #[error("solver: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

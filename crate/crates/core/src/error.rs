use thiserror::Error;

/// Errors raised by fitting, estimation and the data/simulation pipelines.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or emptiness problems in the inputs.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Fitted probabilities drifted to 0/1: the linear predictor exceeded the cap on these rows.
    #[error("quasi-complete separation in {context}: {} rows with |linear predictor| above cap (first: {:?})", rows.len(), rows.iter().take(5).collect::<Vec<_>>())]
    Separation { context: String, rows: Vec<usize> },

    /// An iterative solver ran out of iterations. `last_iterate` is the final point reached.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        solver: String,
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    /// No interior solution exists (balance infeasible, boundary escape).
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: String, row: usize },

    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("{0} is not supported")]
    Unsupported(String),

    #[error("empty point set: {0}")]
    Empty(String),

    #[error("operation requires a linear problem: {0}")]
    LinearityRequired(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("solver diverged after {iterations} iterations (last finite objective {last_objective:e})")]
    Divergence {
        iterations: usize,
        last_objective: f64,
        /// Last iterate whose objective was finite.
        last_coefficients: Vec<f64>,
    },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::Shape { expected, actual })
        }
    }
}

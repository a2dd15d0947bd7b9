use thiserror::Error;

/// Errors raised across the decoding pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An epoch or window falls outside the recording.
    #[error("range error: {0}")]
    Range(String),

    /// Input too short, empty, or otherwise the wrong size.
    #[error("size error: {0}")]
    Size(String),

    /// Arrays with incompatible shapes.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("filter design error: {0}")]
    Design(String),

    /// Rank deficiency or too few channels for a decomposition.
    #[error("dimensionality error: {0}")]
    Dimension(String),

    #[error("did not converge after {iterations} iterations (residual {residual:.3e}): {context}")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        context: String,
    },

    #[error("label error: {0}")]
    Label(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    /// A precondition on the arguments was violated.
    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("rank error: {0}")]
    Rank(String),
}

pub type Result<T> = std::result::Result<T, Error>;

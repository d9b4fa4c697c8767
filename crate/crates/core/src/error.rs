use thiserror::Error;

/// Errors produced by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An iterative or adaptive routine ran out of budget before meeting its target.
    #[error("{routine} did not converge: {detail}")]
    NonConvergence {
        routine: &'static str,
        detail: String,
    },

    /// No sign change was found while expanding a root bracket.
    #[error("root bracket not found: {0}")]
    BracketFailure(String),

    /// A function was evaluated outside the set where it is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A constructor received invalid parameters.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// The evaluation grid does not cover the region where the error lives.
    #[error(
        "grid too small: boundary error {boundary:e} exceeds 10% of interior maximum {interior:e}"
    )]
    GridTooSmall { boundary: f64, interior: f64 },

    /// The node optimizer stopped before reaching the gradient tolerance.
    /// The best iterate is carried along so callers can still report it.
    #[error("node optimizer did not converge after {} iterations (gradient {:e})", .0.iterations, .0.grad_norm)]
    OptimizerNonConvergence(Box<crate::energy::EnergyReport>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn non_convergence(routine: &'static str, detail: impl Into<String>) -> Self {
        Error::NonConvergence {
            routine,
            detail: detail.into(),
        }
    }
}

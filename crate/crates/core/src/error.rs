use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("unsupported metric or problem: {0}")]
    UnsupportedSpec(String),

    #[error("positivity violated: {0}")]
    Positivity(String),

    #[error("singular linearization: positivity margin {margin:e} too small")]
    SingularMatrix { margin: f64 },

    #[error("{what} did not converge within {limit} iterations (residual {residual:e})")]
    IterationLimit {
        what: &'static str,
        limit: usize,
        residual: f64,
    },

    #[error(
        "no admissible damped Newton step at iteration {iteration} (residual {residual:e}); \
         try a continuity path"
    )]
    PositivityCollapse { iteration: usize, residual: f64 },

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("klt condition violated: {0}")]
    KltViolation(String),

    #[error("path aborted at parameter {parameter} after {refinements} refinements: {reason}")]
    PathAborted {
        parameter: f64,
        refinements: usize,
        reason: String,
        /// Steps accepted before the failure.
        partial: Box<crate::solver::PathResult>,
    },

    #[error(transparent)]
    Format(#[from] crate::io::FormatError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

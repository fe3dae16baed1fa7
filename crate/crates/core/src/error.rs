use thiserror::Error;

/// Errors raised anywhere in the discretization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point lies at or beyond the injectivity radius (distance {distance}, limit {limit})")]
    CutLocus { distance: f64, limit: f64 },

    #[error("no monotone consistent stencil at node {center} with radius {radius}")]
    InfeasibleAtRadius { center: usize, radius: f64 },

    #[error("gradient stencil infeasible: {0}")]
    GradientInfeasible(String),

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("singular system: pivot {pivot:e} at column {column}")]
    Singular { column: usize, pivot: f64 },

    #[error("iteration limit {iterations} reached, relative residual {residual:e}")]
    IterationLimit { iterations: usize, residual: f64 },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("stage `{stage}` failed at n = {n}: {source}")]
    Stage {
        stage: &'static str,
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

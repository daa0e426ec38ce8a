use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid knots: {0}")]
    InvalidKnots(String),

    #[error("t = {t} is outside the interval [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("derivative order {order} is too high for a spline of order {spline_order}")]
    DerivativeOrderTooHigh { order: usize, spline_order: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("too few observations: got {got}, need at least {min}")]
    TooFewObservations { got: usize, min: usize },

    #[error("effective number of parameters {params} is not below the sample size {n}")]
    DegreesOfFreedom { params: usize, n: usize },

    #[error("solution escaped the blow-up bound near t = {time}")]
    Blowup { time: f64 },

    #[error("integrator did not reach tolerance {tol:e} with {substeps} substeps per interval")]
    IntegrationTolerance { tol: f64, substeps: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("parameters are not identifiable along: {}", directions.join("; "))]
    NotIdentifiable { directions: Vec<String> },

    #[error("degenerate sample: zero variance")]
    DegenerateSample,

    #[error("insufficient samples: got {got}, need at least {min}")]
    InsufficientSamples { got: usize, min: usize },

    #[error("{failed} of {total} replications failed")]
    ExcessiveFailures { failed: usize, total: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

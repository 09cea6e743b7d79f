use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("divergent covariance: {0}")]
    Divergence(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("series tail bound not met: {0}")]
    TailBound(String),

    #[error("overflow in rescaling bookkeeping at degree {degree}, x = {x}")]
    Overflow { degree: u32, x: f64 },

    #[error("underflow: |lambda - E| = {gap:.3e} below safe threshold for unregularized log")]
    Underflow { gap: f64 },

    #[error("eigensolver failed (residual {residual:.3e}) on matrix {matrix_hash:#018x}")]
    EigenFailed { matrix_hash: u64, residual: f64 },

    #[error("effective sample size {ess:.1} too low for a reliable estimate (min {min})")]
    LowEffectiveSampleSize { ess: f64, min: f64 },

    #[error("insufficient quadrature resolution: {got} nodes, oscillation criterion needs {needed}")]
    Resolution { got: usize, needed: usize },

    #[error("kernel truncation failed: {0}")]
    TruncationFailure(String),

    #[error("pole: {0}")]
    Pole(String),

    #[error("invalid configuration at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

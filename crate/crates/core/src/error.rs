use thiserror::Error;

/// Errors shared by the numerical and simulation layers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or configuration failed validation.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// The adaptive quadrature hit its subdivision cap before reaching the
    /// requested tolerance. Carries the best estimate and its error bound.
    #[error("quadrature did not converge: best estimate {best:e}, error bound {error_bound:e}")]
    QuadratureNonConvergence { best: f64, error_bound: f64 },

    /// The Bessel series in the joint density hit its term cap. Carries the
    /// partial sum on the log scale.
    #[error("density series did not converge after {terms} terms (log partial sum {log_partial:e})")]
    SeriesNonConvergence { terms: usize, log_partial: f64 },

    /// An unscaled special-function value exceeds the floating-point range.
    #[error("overflow: {0} (use the log-scaled variant)")]
    Overflow(String),

    /// A drifted model with more than two dimensions was passed to a routine
    /// that requires the pairwise joint density.
    #[error("dimension restriction: {0}")]
    DimensionRestriction(String),

    /// A copula was paired with a model it was not calibrated for.
    #[error("copula mismatch: {0}")]
    CopulaMismatch(String),

    /// The joint density vanished at every root combination, so the
    /// selection probabilities are undefined for this draw.
    #[error("degenerate root selection: density underflows at all root combinations")]
    DegenerateSelection,

    /// Cholesky factorisation failed on a matrix that should be positive
    /// semidefinite.
    #[error("factorization failed: {0}")]
    Factorization(String),

    /// Calibration-cache I/O or parse failure.
    #[error("calibration cache: {0}")]
    Cache(String),
}

pub type Result<T> = std::result::Result<T, Error>;

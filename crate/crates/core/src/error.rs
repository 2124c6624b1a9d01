use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max |M_ij - conj(M_ji)| = {max_dev:e}")]
    NotHermitian { max_dev: f64 },
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("singular matrix: pivot {pivot:e} at column {index}")]
    SingularMatrix { pivot: f64, index: usize },
    #[error("matrix is not positive definite (pivot {index})")]
    NotPositiveDefinite { index: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("degenerate sigma: entries {i} and {j} coincide ({a} vs {b})")]
    DegenerateSigma { i: usize, j: usize, a: f64, b: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cancellation loss: estimated relative error {0:e}")]
    CancellationLoss(f64),
    #[error("series did not converge within {0} terms")]
    SeriesNotConverged(usize),
    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("spectral argument has zero imaginary part")]
    ZeroImaginaryPart,
    #[error("quadrature not converged: relative change {change:e} at order {order}")]
    QuadratureNotConverged { change: f64, order: usize },
    #[error("epsilon extrapolation not stable after {halvings} halvings")]
    EpsilonNotStable { halvings: usize },
    #[error("saddle point on wrong branch: density {0:e}")]
    WrongBranch(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

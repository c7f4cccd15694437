use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("operation requires a regularized weight (epsilon > 0)")]
    RequiresRegularization,

    #[error("CFL violated: dt = {dt:.6e} exceeds 0.9 * 2 / sqrt(lambda_max) with lambda_max ~ {lambda_max:.6e}")]
    Cfl { dt: f64, lambda_max: f64 },

    #[error("eigensolver stalled after {iterations} iterations (worst relative residual {residual:.3e})")]
    EigenStall { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:.3e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("horizon T = {t} does not exceed T* = {t_star} (observability bound is vacuous)")]
    HorizonTooShort { t: f64, t_star: f64 },

    #[error("data is not contained in the filtered mode span (relative residual {residual:.3e})")]
    SpanViolation { residual: f64 },

    #[error("conjugate gradient exhausted {iterations} iterations (energy residual ratio {residual:.3e})")]
    CgExhausted { iterations: usize, residual: f64 },

    #[error("empty boundary subset")]
    EmptyBoundary,

    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

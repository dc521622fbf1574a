use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("measurement matrix has zero Frobenius norm")]
    ZeroMatrix,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("negative posterior variance {0:e} beyond clamp tolerance")]
    NegativeVariance(f64),
    #[error("numerical divergence at iteration {iteration}: {what} became non-finite")]
    Divergence { iteration: usize, what: &'static str },
    #[error("loss of precision in quadrature oracle: {0}")]
    LossOfPrecision(String),
    #[error("infeasible sparsity: target k = {target}, reachable mean support {reachable:.3}")]
    InfeasibleSparsity { target: usize, reachable: f64 },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

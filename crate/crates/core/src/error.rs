use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("transition matrix is not irreducible: {0}")]
    IrreducibleViolation(String),

    #[error("killing rates do not make the generator invertible: {0}")]
    SingularKilling(String),

    #[error("invalid rate: {0}")]
    InvalidRate(String),

    #[error("killed jump chain is not transient (spectral radius {0} >= 1)")]
    InvalidKilledChain(f64),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("eigen-solver did not converge: {0}")]
    NoConvergence(String),

    #[error("acceptance rate {rate:.3e} below floor {floor:.3e}")]
    BandTooNarrow { rate: f64, floor: f64 },

    #[error("path horizon too short: truncated mass {0:.3e}")]
    HorizonTooShort(f64),

    #[error("cost guard: {points} grid points exceed limit {limit}")]
    CostGuard { points: u128, limit: u128 },

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("invalid comparison pair: {0}")]
    InvalidPair(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI (2 input, 3 numerical, 4 cost guard).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Config(_) | Error::Io(_) | Error::Json(_) => 2,
            Error::DimensionMismatch { .. } | Error::InvalidMatrix(_) => 2,
            Error::CostGuard { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

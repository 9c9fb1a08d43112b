use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parameters not estimable: {0}")]
    Estimability(String),

    #[error("complete separation suspected: |theta| = {norm:.3e} after {iterations} iterations")]
    Separation { norm: f64, iterations: usize },

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("ill-conditioned matrix {what}: condition number {cond:.3e}")]
    Conditioning { what: &'static str, cond: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numbers rather than by the caller.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Estimability(_)
                | Error::Separation { .. }
                | Error::RankDeficient(_)
                | Error::Conditioning { .. }
                | Error::Degenerate(_)
        )
    }
}

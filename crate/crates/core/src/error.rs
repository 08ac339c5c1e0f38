use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("column {column} mixes symbols with their conjugates")]
    Condition1 { column: usize },
    #[error("{what} requires {needed} evaluations, limit is {limit}")]
    ResourceGuard { what: &'static str, needed: u128, limit: u128 },
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status for command-line front ends: 2 for failed
    /// verification, 4 for resource guards, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Verification(_) | Error::Condition1 { .. } => 2,
            Error::ResourceGuard { .. } => 4,
            _ => 3,
        }
    }
}

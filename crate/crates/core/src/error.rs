use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or column counts that do not line up.
    #[error("structural error: {0}")]
    Structural(String),
    /// A value outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("no valid data: {0}")]
    NoData(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("singular fit: {0}")]
    Singular(String),
    #[error("ill-conditioned covariance: {0}")]
    Conditioning(String),
    #[error("optimizer hit {iterations} iterations without converging (best log-likelihood {best_log_lik})")]
    MaxIterations {
        iterations: usize,
        best_log_lik: f64,
        best_ranges: Vec<f64>,
    },
    #[error("unsupported design: {0}")]
    UnsupportedDesign(String),
    #[error("simulator setup error: {0}")]
    Setup(String),
    #[error("batch quality error: {failed} of {total} simulator runs failed")]
    BatchQuality { failed: usize, total: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

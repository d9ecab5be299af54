use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("cutoff ordering: need 0 < eps1 < eps2 <= eps < 1")]
    CutoffOrdering,
    #[error("window truncation unsound: tail ratio {0:.3e}")]
    Truncation(f64),
    #[error("scale out of window")]
    ScaleOutOfWindow,
    #[error("span: {0}")]
    Span(String),
    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),
    #[error("inconsistent labels: {0}")]
    Labels(String),
    #[error("wrong degree: expected {expected}, got {got}")]
    Degree { expected: usize, got: usize },
    #[error("degree overflow: {0}")]
    DegreeOverflow(usize),
    #[error("zero fiber covector")]
    ZeroFiber,
    #[error("edge covariable must be nonzero")]
    ZeroEta,
    #[error("degenerate symbol for mode {0}")]
    DegenerateSymbol(i64),
    #[error("link not unit")]
    LinkNotUnit,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("leaves tubular neighborhood: {0}")]
    Neighborhood(String),
    #[error("base embedding is not special Lagrangian (residual {0:.3e})")]
    NotSpecialLagrangian(f64),
    #[error("ill-conditioned design matrix (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error("below embedding threshold: {0}")]
    BelowThreshold(String),
    #[error("aliasing detected: spectral tail {0:.3e}")]
    Aliasing(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

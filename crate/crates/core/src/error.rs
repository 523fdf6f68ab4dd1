use thiserror::Error;

/// Errors raised anywhere in the modeling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("interval [{lo}, {hi}] does not bracket a root (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("root finder did not converge within {iterations} iterations")]
    Convergence { iterations: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("unknown device id {id} (table has {count} devices)")]
    UnknownDevice { id: usize, count: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mixture component {component} is degenerate: truncation normalizer {normalizer:e} < 1e-12")]
    DegenerateComponent { component: usize, normalizer: f64 },

    #[error("at sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn file(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| Error::File { path: path.to_path_buf(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

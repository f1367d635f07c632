use std::path::PathBuf;

/// Errors raised across the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("accuracy error: {0}")]
    Accuracy(String),
    #[error("overflow: kernel denominator {denominator:e} for lambda = {lambda} (mode must be filtered)")]
    Overflow { lambda: f64, denominator: f64 },
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("Picard iteration is not contracting (ratios {ratios:?})")]
    NonContraction { ratios: Vec<f64> },
    #[error("Picard iteration did not reach tolerance {tol:e} in {max_iter} iterations (last update {last_update:e})")]
    MaxIterations { tol: f64, max_iter: usize, last_update: f64 },
    #[error("unsupported combination: {0}")]
    Unsupported(String),
    #[error("filter conditions violated at {} (mode, time) pairs; first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    FilterViolation(Vec<FilterViolation>),
    #[error("insufficient points: {0}")]
    InsufficientPoints(String),
    #[error("time {0} is not a node of the time grid")]
    NodeMismatch(f64),
    #[error("parse error in {source_name} line {line}: {message}")]
    Parse { source_name: String, line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// One failed check of the filter conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterViolation {
    pub mode: Vec<u32>,
    pub t: f64,
    pub what: String,
}

impl std::fmt::Display for FilterViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "mode {:?} at t = {}: {}", self.mode, self.t, self.what)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

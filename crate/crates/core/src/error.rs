use thiserror::Error;

/// Errors raised by the library.
///
/// `Structure` and `NotMetric`/`NotUltrametric` are kept apart on purpose:
/// a malformed matrix is an input defect, a failing triangle is a
/// mathematical property of a well-formed input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed distance matrix: {0}")]
    Structure(String),

    #[error("not a metric: triangle ({0}, {1}, {2}) fails")]
    NotMetric(usize, usize, usize),

    #[error("not an ultrametric: d({0},{2}) > max(d({0},{1}), d({1},{2}))")]
    NotUltrametric(usize, usize, usize),

    #[error("metric is not 2^n-valued")]
    NotDyadic,

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("linear program solver: {0}")]
    Solver(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its domain constraints.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// An input series or option is malformed.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The data carry no usable signal for the requested statistic.
    #[error("degenerate residuals: {0}")]
    Degenerate(String),
    /// A significance level not covered by the quantile table in use.
    #[error("no {kind} critical value tabulated for level {alpha}")]
    UnknownLevel { kind: String, alpha: f64 },
    /// A Monte Carlo cell had too many estimation failures to be trusted.
    #[error("monte carlo cell aborted: {0}")]
    CellAborted(String),
    /// A quantile table file could not be parsed.
    #[error("quantile table parse error: {0}")]
    TableParse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

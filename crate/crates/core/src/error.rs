use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the function.
    #[error("domain error: {name} = {value} ({reason})")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// A parameter record violates one of its invariants.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Counts are too small or inconsistent to support the estimate.
    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    /// The channel yields no effective events.
    #[error("degenerate channel: {0}")]
    Degenerate(String),

    /// An iterative routine failed to reach its tolerance.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("malformed counts record: {0}")]
    Record(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::Domain {
        name,
        value,
        reason,
    }
}

/// Checks `lo <= value <= hi` and finiteness.
pub(crate) fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<f64> {
    if !value.is_finite() || value < lo || value > hi {
        return Err(domain(name, value, "out of range"));
    }
    Ok(value)
}

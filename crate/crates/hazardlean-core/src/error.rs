//! Crate-wide error type.
//!
//! Errors are split into two broad families that the command-line frontend
//! maps onto distinct exit codes: *usage-class* errors (bad inputs,
//! mismatched dimensions, malformed plans or files) and *numeric-class*
//! errors (failed optimisation, degenerate variance, failed calibration).

use thiserror::Error;

/// Convenient result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Array or grid dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is invalid or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A fold plan is invalid for the requested operation.
    #[error("invalid fold plan: {0}")]
    Plan(String),

    /// The caller combined operations in an unsupported way.
    #[error("usage error: {0}")]
    Usage(String),

    /// A numeric routine failed to converge or produced non-finite values.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Simulation calibration could not reach its target.
    #[error("calibration failure: {0}")]
    Calibration(String),

    /// A variance estimate needed for studentisation is zero or negative.
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// CSV parsing or writing failure.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// JSON parsing or writing failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code the CLI uses for this error: 2 for usage-class
    /// problems, 3 for numeric-class problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_)
            | Error::Domain(_)
            | Error::Config(_)
            | Error::Plan(_)
            | Error::Usage(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::Numeric(_) | Error::Calibration(_) | Error::DegenerateVariance(_) => 3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_split_usage_from_numeric() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::Usage("x".into()).exit_code(), 2);
        assert_eq!(Error::Numeric("x".into()).exit_code(), 3);
        assert_eq!(Error::DegenerateVariance("x".into()).exit_code(), 3);
        assert_eq!(Error::Calibration("x".into()).exit_code(), 3);
    }
}

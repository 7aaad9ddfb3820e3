use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("inversion did not converge: level error {max_error:e} above tolerance {tol:e}")]
    NotConverged { max_error: f64, tol: f64 },

    /// A requested level is not confined by the grid.
    #[error("domain truncation: {0}")]
    DomainTruncation(String),

    #[error("protocol domain: {0}")]
    ProtocolDomain(String),

    #[error("measurement decode failed: energy {energy} is not within tolerance of any level")]
    Decode { energy: f64 },

    #[error("inconsistent outcome: decoded factor {factor} does not divide {n}")]
    Inconsistent { factor: u64, n: u64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("basis truncation: {0}")]
    Truncation(String),

    #[error("step size underflow at t = {t} (largest energy gap {largest_gap})")]
    Stiffness { t: f64, largest_gap: f64 },

    #[error("no motion: energy {energy} is below the effective potential minimum {minimum}")]
    NoMotion { energy: f64, minimum: f64 },

    #[error("integrator accuracy: relative energy drift {drift:e} exceeds {limit:e}")]
    IntegratorAccuracy { drift: f64, limit: f64 },

    #[error("insufficient turning points: need {need}, found {found}")]
    InsufficientTurningPoints { need: usize, found: usize },

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error enum.
#[derive(Debug, Error)]
pub enum Error {
    /// A model or operation parameter violates its stated precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// No arbitrage-free model exists for the requested market inputs.
    #[error("infeasible market: {0}")]
    InfeasibleMarket(String),

    /// Evaluation requested outside the declared domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two series that must share a time grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A functional spec references labels or components that do not exist.
    #[error("spec error: {0}")]
    Spec(String),

    /// Local-volatility calibration could not produce a valid surface.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// No coefficient variant of a closed-form family satisfies the PDE system.
    #[error("adjudication failure: {0}")]
    Adjudication(String),

    /// Experiment configuration failed to parse or validate.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

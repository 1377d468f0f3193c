//! Error type shared by every module of this crate.

use thiserror::Error;

/// Errors produced by dataset construction, estimators, the simulator and
/// the benchmark runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sequences must have the same length (got {0} and {1})")]
    LengthMismatch(usize, usize),

    #[error("need at least {min} observations, got {got}")]
    TooFewObservations { min: usize, got: usize },

    #[error("need at least two genetic variants, got {0}; a valid instrument set requires at least two valid instruments")]
    TooFewVariants(usize),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("{0} has zero variance")]
    ZeroVariance(&'static str),

    #[error("instrument subset is empty")]
    EmptySubset,

    #[error("instrument subset is invalid: {0}")]
    InvalidSubset(String),

    #[error("variant index {index} out of range for {num_variants} variants")]
    IndexOutOfRange { index: usize, num_variants: usize },

    #[error("instrument columns are collinear (first-stage Gram matrix is singular)")]
    SingularInstruments,

    #[error("weak instruments: first-stage signal below tolerance")]
    WeakInstruments,

    #[error("correlation is saturated (|r| = 1), Fisher transform is infinite")]
    SaturatedCorrelation,

    #[error("significance level must lie strictly between 0 and 1, got {0}")]
    InvalidAlpha(f64),

    #[error("variant {0} is uncorrelated with the exposure (direction ratio denominator below tolerance)")]
    IrrelevantInstrument(usize),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("parameter rejection budget exhausted after {0} attempts")]
    RejectionBudgetExhausted(usize),

    #[error("malformed dataset CSV: {0}")]
    MalformedCsv(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

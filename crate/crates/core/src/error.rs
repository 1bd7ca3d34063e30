//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A probability entry is more negative than the -1e-12 slack allows.
    #[error("negative mass in {what} at {coord}: {value:e}")]
    NegativeMass {
        what: String,
        coord: String,
        value: f64,
    },

    /// A distribution (or a conditional slice of one) does not sum to 1.
    #[error("{what} is not normalized: sum = {sum}")]
    NotNormalized { what: String, sum: f64 },

    /// Tensor sizes disagree between two objects that must share alphabets.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    /// Marginalization was requested over an empty variable subset.
    #[error("empty variable subset")]
    EmptySubset,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An update produced an all-zero slice before normalization.
    #[error("numeric underflow: {0}")]
    NumericUnderflow(String),

    /// A release symbol has zero total mass where positive mass is required.
    #[error("release symbol {symbol} has zero mass")]
    ZeroMassRelease { symbol: usize },

    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    /// Time-sharing cannot reach the budget from the supplied points.
    #[error("no bracketing points for budget (eps = {eps}, delta = {delta})")]
    NoBracket { eps: f64, delta: f64 },

    /// The budget itself is malformed (negative, NaN, or eps > delta).
    #[error("infeasible budget: {0}")]
    InfeasibleBudget(String),

    /// A session step broke the budget ordering rules.
    #[error("budget order violation at step {step}: {reason}")]
    BudgetOrderViolation { step: usize, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-parsable name for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NegativeMass { .. } => "NegativeMass",
            Error::NotNormalized { .. } => "NotNormalized",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::EmptySubset => "EmptySubset",
            Error::InvalidInput(_) => "InvalidInput",
            Error::NumericUnderflow(_) => "NumericUnderflow",
            Error::ZeroMassRelease { .. } => "ZeroMassRelease",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::NoBracket { .. } => "NoBracket",
            Error::InfeasibleBudget(_) => "InfeasibleBudget",
            Error::BudgetOrderViolation { .. } => "BudgetOrderViolation",
            Error::Io(_) => "Io",
        }
    }

    /// Process exit code for the CLI: 2 config/validation, 3 numeric, 4 budget.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NegativeMass { .. }
            | Error::NotNormalized { .. }
            | Error::DimensionMismatch { .. }
            | Error::EmptySubset
            | Error::InvalidInput(_) => 2,
            Error::NumericUnderflow(_)
            | Error::ZeroMassRelease { .. }
            | Error::TooFewPoints { .. }
            | Error::NoBracket { .. }
            | Error::Io(_) => 3,
            Error::InfeasibleBudget(_) | Error::BudgetOrderViolation { .. } => 4,
        }
    }
}

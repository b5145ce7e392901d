//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failure modes of the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Integer arithmetic overflowed while enumerating a lattice shell.
    #[error("shell value {value} is too large for exact enumeration")]
    ShellTooLarge { value: i64 },

    /// An operation needed at least one lattice point or sample.
    #[error("empty set: {0}")]
    Empty(String),

    /// A bounded search ran out of candidates.
    #[error("search exhausted: found {found} of {wanted} within the scan window")]
    Exhausted { found: usize, wanted: usize },

    /// A bracketing root finder saw no sign change.
    #[error("root bracketing failed on [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },

    /// A wave does not carry the symmetry a construction requires.
    #[error("symmetry check failed: residual {residual:.3e} exceeds {tolerance:.1e}")]
    Symmetry { residual: f64, tolerance: f64 },

    /// The requested combination is outside the implemented scope.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Input is degenerate for the requested normalization.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A numerical accuracy contract was violated.
    #[error("numeric contract violated: {0}")]
    Contract(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable reason string.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "invalid-input",
            Error::ShellTooLarge { .. } => "shell-too-large",
            Error::Empty(_) => "empty",
            Error::Exhausted { .. } => "search-exhausted",
            Error::Bracket { .. } => "bracket-failure",
            Error::Symmetry { .. } => "symmetry-violation",
            Error::Unsupported(_) => "unsupported",
            Error::Degenerate(_) => "degenerate",
            Error::Contract(_) => "numeric-contract",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// True when the failure stems from a numerical contract rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Contract(_) | Error::Bracket { .. } | Error::Exhausted { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

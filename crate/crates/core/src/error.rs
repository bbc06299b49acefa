use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the domain of a deformed logarithm, a
    /// fractional power, or a divergence (support violations included).
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes of tables or vectors do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A parameter or table violates its stated invariant.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The normalizer (or boundary) search interval does not contain a sign change.
    #[error("bisection bracket [{lo}, {hi}] does not contain a root")]
    Bracket { lo: f64, hi: f64 },

    /// An iterative procedure stopped before reaching its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// The occupancy linear system could not be factorized.
    #[error("singular linear system")]
    Singular,

    /// Gridworld text could not be parsed.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

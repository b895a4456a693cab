use crate::ast::Sort;

/// Unified error type for every layer of the crate.
///
/// Variants are grouped by origin: syntax, typing, elimination,
/// model arithmetic, measure computation, and fitting.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}, column {col}: {message}")]
    Parse { line: usize, col: usize, message: String },

    #[error("sort mismatch: expected {expected:?}, found {found:?} in {context}")]
    SortMismatch { expected: Sort, found: Sort, context: String },

    #[error("ill-formed term: {0}")]
    IllFormedTerm(String),

    #[error("formula is outside the supported fragment: {0}")]
    OutOfFragment(String),

    #[error("nonlinear value-group term: {0}")]
    Nonlinear(String),

    #[error("unbound variable `{0}`")]
    UnboundVariable(String),

    #[error("integer overflow during {0}")]
    Overflow(&'static str),

    #[error("divisibility modulus must be positive, got {0}")]
    BadModulus(i64),

    #[error("set is unbounded in variable `{0}`")]
    Unbounded(String),

    #[error("division by zero in {0}")]
    DivisionByZero(&'static str),

    #[error("precision exhausted: {0}")]
    Precision(String),

    #[error("constant {0} is not a {1}-adic integer unit decomposition: prime divides denominator")]
    BadConstant(String, u64),

    #[error("no stability level up to {max_level}: witnessed classes {witness_a} and {witness_b} at level {refined_level}")]
    NotStable { max_level: u32, witness_a: String, witness_b: String, refined_level: u32 },

    #[error("computation budget exceeded: needed {needed} units, budget {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("orbital support did not terminate below cutoff {0}")]
    UnboundedSupport(i64),

    #[error("disjunct `{disjunct}` is unbounded under sampled model p = {prime}")]
    UnboundedUnderModel { prime: u64, disjunct: String },

    #[error("interpolation failed: {0}")]
    FitFailed(String),

    #[error("ambiguous interpolation: {0}")]
    FitAmbiguous(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    /// Shorthand for a parse error.
    pub fn parse(line: usize, col: usize, message: impl Into<String>) -> Self {
        Error::Parse { line, col, message: message.into() }
    }

    /// Shorthand for a generic invalid-input error.
    pub fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }
}

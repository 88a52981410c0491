//! Error type shared by all kernel modules.

use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor/operand dimensions do not line up.
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// A sequence operation received no elements.
    EmptySequence(&'static str),
    /// Prediction requested with no labeled examples.
    EmptySupport,
    /// Softmax/prediction temperature must be strictly positive.
    NonPositiveTemperature(f64),
    /// Selection budget outside `1..=pool_size`.
    InvalidBudget { budget: usize, pool_size: usize },
    /// Dataset text could not be parsed. Lines are 1-based.
    Parse { line: usize, message: String },
    /// Requested split sizes exceed what the dataset provides.
    InsufficientClasses { requested: usize, available: usize },
    /// Not enough examples to build a problem of the requested size.
    InsufficientExamples { requested: usize, available: usize },
    /// Duplicate parameter name in a store.
    DuplicateParam(String),
    /// Named parameter missing from a store.
    MissingParam(String),
    /// An index landed outside its collection.
    IndexOutOfBounds { index: usize, len: usize },
    /// A forward or backward pass produced a non-finite number.
    NonFinite(&'static str),
    /// A collection that must be non-empty was empty.
    EmptyCollection(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch {
                context,
                expected,
                got,
            } => write!(f, "{context}: dimension mismatch (expected {expected}, got {got})"),
            Error::EmptySequence(ctx) => write!(f, "{ctx}: empty sequence"),
            Error::EmptySupport => write!(f, "prediction requested with no labeled examples"),
            Error::NonPositiveTemperature(t) => {
                write!(f, "temperature must be > 0, got {t}")
            }
            Error::InvalidBudget { budget, pool_size } => {
                write!(f, "budget {budget} outside 1..={pool_size}")
            }
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::InsufficientClasses {
                requested,
                available,
            } => write!(f, "requested {requested} classes but only {available} available"),
            Error::InsufficientExamples {
                requested,
                available,
            } => write!(f, "requested {requested} examples but only {available} available"),
            Error::DuplicateParam(name) => write!(f, "duplicate parameter name: {name}"),
            Error::MissingParam(name) => write!(f, "missing parameter: {name}"),
            Error::IndexOutOfBounds { index, len } => {
                write!(f, "index {index} out of bounds for length {len}")
            }
            Error::NonFinite(ctx) => write!(f, "{ctx}: non-finite value encountered"),
            Error::EmptyCollection(ctx) => write!(f, "{ctx}: empty collection"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

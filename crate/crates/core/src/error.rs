use alloc::string::String;
use core::fmt;

/// Errors raised by tensor ops, layer construction and data generation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not fit the operation.
    Dimension {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// An op produced NaN or an infinity.
    NonFinite { op: &'static str },
    /// A precondition on how the API is driven was violated.
    Contract(String),
    /// An invalid network description.
    Spec(String),
    /// An invalid task, split or generator setting.
    Config(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, lhs, rhs } => write!(
                f,
                "{op}: incompatible shapes {}x{} and {}x{}",
                lhs.0, lhs.1, rhs.0, rhs.1
            ),
            Error::NonFinite { op } => write!(f, "{op}: produced a non-finite value"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Spec(msg) => write!(f, "invalid network spec: {msg}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

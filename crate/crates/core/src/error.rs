use core::fmt;

/// Errors raised by parameter validation and the controller pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A value that must be finite was NaN or infinite.
    NonFinite(&'static str),
    /// A parameter is outside its valid range.
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    /// A sequence does not have the length the horizon requires.
    LengthMismatch { expected: usize, found: usize },
    /// A sample cost was NaN or infinite, so the batch cannot be weighted.
    NonFiniteCost { sample: usize },
    /// An operation that needs at least one element got none.
    Empty(&'static str),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: &'static str) -> Self {
        Error::InvalidParameter { name, reason }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite(what) => write!(f, "{what} must be finite"),
            Error::InvalidParameter { name, reason } => write!(f, "invalid {name}: {reason}"),
            Error::LengthMismatch { expected, found } => {
                write!(f, "sequence length {found} does not match horizon {expected}")
            }
            Error::NonFiniteCost { sample } => write!(f, "sample {sample} has a non-finite cost"),
            Error::Empty(what) => write!(f, "{what} is empty"),
        }
    }
}

impl core::error::Error for Error {}

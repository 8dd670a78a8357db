use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the core algorithms. Each variant names the module that
/// rejected its input so harness diagnostics can be traced back.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on a numeric argument failed.
    Domain {
        module: &'static str,
        message: String,
    },
    /// Two sequences that must have the same length did not.
    LengthMismatch {
        module: &'static str,
        expected: usize,
        found: usize,
    },
    /// A value that must be finite was NaN or infinite.
    NonFinite { module: &'static str, what: &'static str },
    /// The requested configuration is valid but not supported by this crate.
    Unsupported { module: &'static str, message: String },
}

impl Error {
    pub(crate) fn domain(module: &'static str, message: impl Into<String>) -> Self {
        Error::Domain {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn check_len(module: &'static str, expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                module,
                expected,
                found,
            })
        }
    }

    /// The module that produced the error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Domain { module, .. }
            | Error::LengthMismatch { module, .. }
            | Error::NonFinite { module, .. }
            | Error::Unsupported { module, .. } => module,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain { module, message } => write!(f, "[{module}] {message}"),
            Error::LengthMismatch {
                module,
                expected,
                found,
            } => write!(f, "[{module}] length mismatch: expected {expected}, found {found}"),
            Error::NonFinite { module, what } => write!(f, "[{module}] non-finite {what}"),
            Error::Unsupported { module, message } => write!(f, "[{module}] unsupported: {message}"),
        }
    }
}

impl core::error::Error for Error {}

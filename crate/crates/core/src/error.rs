use alloc::string::String;
use core::fmt;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the operation's domain (index out of range,
    /// empty set, negative radius, ...).
    Argument(String),
    /// A configuration value is invalid.
    Config(String),
    /// The data cannot support the requested computation.
    Data(String),
    /// The moment equation could not be solved.
    Estimation {
        message: String,
        condition_number: Option<f64>,
    },
    /// A documented precondition was violated by the caller.
    Contract(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Argument(m) => write!(f, "invalid argument: {m}"),
            Error::Config(m) => write!(f, "invalid configuration: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
            Error::Estimation {
                message,
                condition_number: Some(c),
            } => write!(f, "estimation failed: {message} (condition number {c:.3e})"),
            Error::Estimation { message, .. } => write!(f, "estimation failed: {message}"),
            Error::Contract(m) => write!(f, "contract violation: {m}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;

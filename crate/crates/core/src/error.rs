use alloc::string::String;

/// Errors raised by the classification pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An input violates a documented precondition or type invariant.
    #[error("validation error: {0}")]
    Validation(String),
    /// A linear system or optimizer could not produce a usable answer.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// The SMO solver hit its iteration cap before meeting the KKT tolerance.
    #[error("SMO did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::Validation(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;

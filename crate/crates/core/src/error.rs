use alloc::string::String;
use core::fmt;

/// Errors produced by the estimation core.
#[derive(Debug, Clone, PartialEq)]
pub enum MeeError {
    /// A flat parameter vector or matrix has the wrong size.
    Shape { expected: usize, found: usize },
    /// A signal parameter lies outside the family's domain.
    Domain { message: String },
    /// Malformed input (non-stochastic derivative rows, short sequences, ...).
    InvalidInput { message: String },
    /// The pair density vanished at an observed or evaluated pair.
    ZeroDensity { y: f64, y_next: f64 },
    /// Power iteration did not reach the requested residual.
    NonConvergence { iterations: usize, residual: f64 },
    /// The information matrix is not invertible.
    SingularInformation { min_eigenvalue: f64 },
    /// A matrix that should be positive semi-definite is not.
    NotPositiveSemidefinite { min_eigenvalue: f64 },
}

pub type Result<T> = core::result::Result<T, MeeError>;

impl MeeError {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        MeeError::InvalidInput { message: message.into() }
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        MeeError::Domain { message: message.into() }
    }

    /// True for failures of a numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            MeeError::ZeroDensity { .. }
                | MeeError::NonConvergence { .. }
                | MeeError::SingularInformation { .. }
                | MeeError::NotPositiveSemidefinite { .. }
        )
    }
}

impl fmt::Display for MeeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeeError::Shape { expected, found } => {
                write!(f, "shape error: expected length {expected}, found {found}")
            }
            MeeError::Domain { message } => write!(f, "domain error: {message}"),
            MeeError::InvalidInput { message } => write!(f, "invalid input: {message}"),
            MeeError::ZeroDensity { y, y_next } => {
                write!(f, "pair density vanishes at ({y}, {y_next})")
            }
            MeeError::NonConvergence { iterations, residual } => {
                write!(f, "power iteration did not converge after {iterations} iterations (residual {residual:e})")
            }
            MeeError::SingularInformation { min_eigenvalue } => {
                write!(f, "information matrix is singular (min eigenvalue {min_eigenvalue:e})")
            }
            MeeError::NotPositiveSemidefinite { min_eigenvalue } => {
                write!(f, "matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")
            }
        }
    }
}

impl core::error::Error for MeeError {}

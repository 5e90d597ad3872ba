use thiserror::Error;

use crate::geometry::Colour;

/// Errors raised by the library. Every variant has a stable machine-readable
/// [`Error::kind`] so front ends can map failures to exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("subsystem is not surjective: {0}")]
    NotSurjective(String),

    #[error("budget exceeded: about {needed:.3e} units of work requested, limit is {limit:.3e}")]
    BudgetExceeded { needed: f64, limit: f64 },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("leading eigenvector is not strictly positive (smallest entry {min:.3e})")]
    NonPositiveEigenvector { min: f64 },

    #[error("face mismatch: the branch is defined on the {expected} face but the point lies on the {found} face")]
    FaceMismatch { expected: Colour, found: Colour },

    #[error("point lies on the invariant curve and strict mode requires a generic point")]
    BoundaryPoint,

    #[error("malformed digit ({i}, {j}) for subdivision factor {s}")]
    MalformedDigit { i: u32, j: u32, s: u32 },

    #[error("measure has zero total mass")]
    ZeroMass,
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::NotSurjective(_) => "not_surjective",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::NonConvergence { .. } => "non_convergence",
            Error::NonPositiveEigenvector { .. } => "non_positive_eigenvector",
            Error::FaceMismatch { .. } => "face_mismatch",
            Error::BoundaryPoint => "boundary_point",
            Error::MalformedDigit { .. } => "malformed_digit",
            Error::ZeroMass => "zero_mass",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

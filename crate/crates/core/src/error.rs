use thiserror::Error;

/// Errors raised by the solver and the diagnostics built on top of it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An exponent or parameter lies outside the admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// A ball, grid or point does not fit the requested geometry.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Not enough admissible radii (or coarsening levels) for a regression.
    #[error("insufficient radii: {0}")]
    InsufficientRadii(String),

    /// A precondition of a diagnostic does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The problem failed validation; every violation is listed.
    #[error("invalid problem: {}", .0.join("; "))]
    InvalidProblem(Vec<String>),

    /// A computed quantity came out NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

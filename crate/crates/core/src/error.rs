use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration field violates its constraint.
    #[error("invalid {field}: {constraint}")]
    InvalidConfig { field: String, constraint: String },

    /// A transition row with no positive entry cannot be sampled.
    #[error("transition row has no positive entry")]
    EmptyRow,

    /// Two levels with the same energy have no decay factor.
    #[error("degenerate level pair: energy difference is zero")]
    DegenerateLevels,

    /// The confidence bound has a negative discriminant.
    #[error("no real time bound: {0}")]
    NotReal(String),

    /// Time grids of two inputs do not line up.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A state vector is not normalised.
    #[error("state not normalised: |psi|^2 = {0}")]
    NotNormalised(f64),

    /// Operation requires a different ensemble mode.
    #[error("wrong ensemble mode: {0}")]
    WrongMode(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(field: &str, constraint: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.to_string(),
            constraint: constraint.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("column {0} is constant and cannot be standardized")]
    ConstantColumn(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid scenario: {0}")]
    InvalidSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("coordinate descent did not reach KKT tolerance within {max_iter} sweeps")]
    NonConvergence { max_iter: usize },

    #[error("degenerate fit: active set of size {active} with only {n} observations")]
    DegenerateFit { active: usize, n: usize },

    #[error("X_S^T X_S is numerically singular for S = {0:?}")]
    SingularSubmatrix(Vec<usize>),

    #[error("configuration size {size} exceeds the cap {cap}")]
    SizeOverCap { size: usize, cap: usize },

    #[error("numerical failure: {0}")]
    NumericalOverflow(String),

    #[error("value {0} outside the domain [0, 1]")]
    DomainError(f64),

    #[error("enumeration over {n} coordinates is too large (max {max})")]
    TooLarge { n: usize, max: usize },

    #[error("credible level tail {0} must lie in (0, 1/2)")]
    InvalidLevel(f64),

    #[error("no replications to aggregate")]
    EmptyInput,

    #[error("every configuration weight is zero")]
    AllWeightsDegenerate,
}

impl Error {
    /// True for failures of the numerical routines, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::DegenerateFit { .. }
                | Error::SingularSubmatrix(_)
                | Error::NumericalOverflow(_)
                | Error::AllWeightsDegenerate
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

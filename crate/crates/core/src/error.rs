use thiserror::Error;

/// Which marginal a validation error refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Marginal {
    Source,
    Target,
}

impl std::fmt::Display for Marginal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Marginal::Source => f.write_str("p"),
            Marginal::Target => f.write_str("q"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OtError {
    #[error("cost entry ({row}, {col}) is negative: {value}")]
    NegativeCost { row: usize, col: usize, value: f64 },
    #[error("marginal {which} is not on the simplex (sum = {sum}, min entry = {min})")]
    MarginalNotSimplex { which: Marginal, sum: f64, min: f64 },
    #[error("problem dimensions must be at least 1x1, got {rows}x{cols}")]
    EmptyDimension { rows: usize, cols: usize },
    #[error("non-finite value in {what}")]
    NonFiniteEntry { what: &'static str },
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("penalty parameter must be positive, got {0}")]
    NonPositiveRho(f64),
    #[error("initial plan has a negative entry at ({row}, {col})")]
    InvalidInitialPlan { row: usize, col: usize },
    #[error("non-finite iterate at iteration {iteration}")]
    NonFiniteIterate { iteration: usize },
    #[error("fold state mismatch: caller expected folded = {expected}, array holds folded = {actual}")]
    FoldStateMismatch { expected: bool, actual: bool },
    #[error("marginal {which} has a zero entry at index {index}")]
    ZeroMarginal { which: Marginal, index: usize },
    #[error("problem with {cells} cells exceeds the exact oracle limit of {limit}")]
    TooLarge { cells: usize, limit: usize },
    #[error("cost matrix is identically zero")]
    DegenerateCost,
    #[error("point dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

use thiserror::Error;

/// Errors surfaced by validation, enumeration, and the root finder.
#[derive(Debug, Error)]
pub enum MoranError {
    #[error("map {index} at level {level} has contraction ratio {ratio} outside (0,1)")]
    NonContracting {
        level: usize,
        index: usize,
        ratio: f64,
    },

    #[error("level {level} has {count} map(s); at least 2 are required")]
    TooFewMaps { level: usize, count: usize },

    #[error("map {index} at level {level} does not map the ambient set into itself (excess {excess:.3e})")]
    NotInvariant {
        level: usize,
        index: usize,
        excess: f64,
    },

    #[error("map {index} at level {level} has a non-orthogonal linear part (defect {defect:.3e})")]
    NotOrthogonal {
        level: usize,
        index: usize,
        defect: f64,
    },

    #[error("ambient dimension {0} is not supported; only 1 and 2 are")]
    UnsupportedDimension(usize),

    #[error("enumeration budget exceeded: {used} words against cap {cap}")]
    BudgetExceeded { used: usize, cap: usize },

    #[error("level {requested} is beyond the {available} materialized levels of a generated sequence")]
    LevelBudget { requested: usize, available: usize },

    #[error("pressure at t=0 is non-positive, no zero to bracket")]
    BracketFailure,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("spec file: {0}")]
    SpecFile(String),
}

pub type Result<T> = std::result::Result<T, MoranError>;

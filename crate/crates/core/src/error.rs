use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("non-finite matrix entry")]
    NonFinite,

    #[error("invalid degrees of freedom {dof} for dimension {dim}: need dof > {bound}")]
    InvalidDof { dof: f64, dim: usize, bound: f64 },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("site {0} is not an active lattice site")]
    InactiveSite(usize),

    #[error("no observations to summarise")]
    EmptyData,

    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),

    #[error("trace holds no retained iterations")]
    EmptyTrace,

    #[error("chain too short: {len} < {min}")]
    ChainTooShort { len: usize, min: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("empty chain")]
    EmptyChain,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

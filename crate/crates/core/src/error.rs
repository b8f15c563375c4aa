use thiserror::Error;

/// Errors raised by tensor algebra, estimation and experiment code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("mode {mode} out of range for an order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank {rank} exceeds the admissible maximum {max}")]
    RankTooLarge { rank: usize, max: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("degenerate moment matrix for mode {mode}: leading singular value {sigma:e}")]
    DegenerateMoment { mode: usize, sigma: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown method preset `{0}`")]
    UnknownPreset(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised across the sampling and recovery pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pulse shape: {0}")]
    InvalidShape(String),

    #[error("invalid pulse stream: {0}")]
    InvalidStream(String),

    #[error("invalid fine grid: {0}")]
    InvalidGrid(String),

    #[error("Dirac pulses cannot be evaluated pointwise on a grid")]
    DiracOnGrid,

    #[error("grid spacing {dt:e} s is too coarse (needs at most {required:e} s)")]
    GridTooCoarse { dt: f64, required: f64 },

    #[error("invalid index set: {0}")]
    InvalidIndexSet(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("operation not supported for this kernel: {0}")]
    UnsupportedKernel(String),

    #[error("invalid acquisition config: {0}")]
    InvalidConfig(String),

    #[error("kernel and stream are incompatible: {0}")]
    SupportMismatch(String),

    #[error("burst spacing violated between bursts {first} and {second}: gap {gap:e} s, need > {required:e} s")]
    BurstSpacing {
        first: usize,
        second: usize,
        gap: f64,
        required: f64,
    },

    #[error("rank-deficient system: effective rank {rank} < required {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("zero entry on a diagonal correction at k = {k}")]
    ZeroDiagonal { k: i64 },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("waterfilling failed: {0}")]
    Waterfilling(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be 1, 2 or 3, got {0}")]
    Dimension(usize),
    #[error("points per axis must be a power of two and at least 8, got {0}")]
    NonPowerOfTwo(usize),
    #[error("grid with {points} points exceeds the memory budget of {budget} points")]
    MemoryBudget { points: usize, budget: usize },
    #[error("box length must be positive and finite, got {0}")]
    BoxLength(f64),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("expected a {expected}-space field")]
    SpaceMismatch { expected: &'static str },
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("Schatten exponent must be at least 1, got {0}")]
    SchattenExponent(f64),
    #[error("axis {axis} out of range for dimension {dim}")]
    Axis { axis: usize, dim: usize },
    #[error("dense materialization refused for {0} grid points (limit 4096)")]
    DenseTooLarge(usize),
    #[error("operator must be hermitian")]
    NotHermitian,
    #[error("boundary contamination at t = {t}: shell holds {fraction:e} of the mass")]
    BoundaryContamination { t: f64, fraction: f64 },
    #[error("time {0} is not a trajectory stamp")]
    NotAStamp(f64),
    #[error("operation unavailable in dimension {0}")]
    Unsupported(usize),
    #[error("distribution has a negative sample {0:e}")]
    NegativeDistribution(f64),
    #[error("power iteration did not converge within {0} iterations")]
    PowerIteration(usize),
    #[error("probe width {width} exceeds 8 grid spacings ({limit})")]
    ProbeWidth { width: f64, limit: f64 },
    #[error("fit window holds {0} points, at least 8 are required")]
    FitPoints(usize),
    #[error("nonpositive value {0:e} in fit window")]
    NonPositive(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error("malformed snapshot: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

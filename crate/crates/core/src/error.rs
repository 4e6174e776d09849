use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("finest level has no children")]
    FinestLevel,
    #[error("moment order exceeds table")]
    MomentOrder,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("cube (level {level}, coords {coords:?}) is not valid at depth {depth}")]
    InvalidCube { level: u32, coords: Vec<u32>, depth: u32 },
    #[error("degree bound k={0} outside supported range 0..=3")]
    DegreeBound(u32),
    #[error("error exponent q={0} unsupported (expected 1 or 2)")]
    ErrorExponent(u32),
    #[error("fractional order {lambda} outside [0, {dim})")]
    FractionalOrder { lambda: f64, dim: usize },
    #[error("invalid exponent: {0}")]
    Exponent(String),
    #[error("oracle scale exceeded: {0}")]
    OracleScale(String),
    #[error("negative density value {value} at cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },
    #[error("stopping-time family is not sparse: {0}")]
    NotSparse(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("unknown generator {0:?}")]
    UnknownGenerator(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

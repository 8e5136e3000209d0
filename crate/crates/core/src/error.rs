use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid size {0} must be even and at least 8")]
    InvalidGridSize(usize),

    #[error("dealias fraction {num}/{den} must lie in (0, 1]")]
    InvalidDealias { num: u32, den: u32 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("physical array has {got} samples, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },

    #[error("wavenumber ({0}, {1}) is not an active mode of the grid")]
    InactiveMode(i64, i64),

    #[error("field is identically zero")]
    ZeroField,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step {h:e} exceeds the CFL bound {h_max:e}")]
    Cfl { h: f64, h_max: f64 },

    #[error("non-finite value produced at t = {t}")]
    NonFinite { t: f64 },

    #[error("scalar norm collapsed to zero at t = {t}")]
    NormCollapse { t: f64 },

    #[error("trajectory does not cover the requested interval: {0}")]
    Coverage(String),

    #[error("grid size {n} exceeds the direct-summation limit {max}")]
    TooLarge { n: usize, max: usize },

    #[error("initial spectral median is {got}, expected {expected}")]
    MedianPrecondition { got: u64, expected: u64 },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("level {m0} is not resolvable: must not exceed {limit}")]
    Resolution { m0: u64, limit: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("lattice parameter {param} = {value} does not divide signal length {n}")]
    BadLattice {
        param: &'static str,
        value: usize,
        n: usize,
    },
    #[error("window must not be identically zero")]
    ZeroWindow,
    #[error("stride {stride} does not divide {n}")]
    BadStride { stride: usize, n: usize },
    #[error("center frequencies must be strictly increasing (violated at index {index})")]
    NonMonotoneCenters { index: usize },
    #[error("frequency bounds invalid: f_min={f_min}, f_max={f_max}, nyquist={nyquist}")]
    BadFrequencyRange {
        f_min: f64,
        f_max: f64,
        nyquist: f64,
    },
    #[error("filter {index} is identically zero")]
    ZeroFilter { index: usize },
    #[error("degenerate averaging window: rho = {rho} must be < sigma = {sigma}")]
    DegenerateGaussian { rho: f64, sigma: f64 },
    #[error("averaging width {width} exceeds maximum {max}")]
    WidthTooLarge { width: usize, max: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-negative input required, found {value} at index {index}")]
    NegativeEntry { value: f64, index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed container: {0}")]
    MalformedContainer(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

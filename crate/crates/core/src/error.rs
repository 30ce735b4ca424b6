use thiserror::Error;

use crate::mode::Mode;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid frequency vector: {0}")]
    InvalidFrequency(String),

    #[error("lattice scan bound exceeded: 2^{m} > configured cap 2^{cap}")]
    ScanCapExceeded { m: u32, cap: u32 },

    #[error("resonant frequency: |omega . {nu}| = {value:e} below threshold {threshold:e}")]
    Resonance {
        nu: Mode,
        value: f64,
        threshold: f64,
    },

    #[error("table covers m <= {have} but m = {want} was requested")]
    InsufficientTable { have: i64, want: i64 },

    #[error("scale {n} outside the certified scale range 0..={max}")]
    ScaleOutOfRange { n: i64, max: usize },

    #[error("argument {x:e} lies below the smallest resolved scale (needs |x| >= {floor:e})")]
    BelowScaleFloor { x: f64, floor: f64 },

    #[error("x = 0 is not admissible here")]
    ZeroArgument,

    #[error("invalid forcing spec: {0}")]
    InvalidForcing(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("series table incomplete: order {need} requested, table has {have}")]
    IncompleteTable { need: usize, have: usize },

    #[error("order {k} exceeds configured cap {cap}")]
    OrderCapExceeded { k: usize, cap: usize },

    #[error("zero divisor on line with momentum {0}")]
    ZeroDivisor(Mode),

    #[error(
        "newton iteration did not converge after {iterations} steps (best residual {residual:e})"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("singular jacobian in range equation")]
    SingularJacobian,

    #[error("insufficient samples: need at least {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("continuation step failed at eps = {eps:e}: {reason}")]
    StepFailure { eps: f64, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

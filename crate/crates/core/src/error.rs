use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension {0} outside supported range 1..={max}", max = crate::linalg::MAX_DIM)]
    DimensionOutOfRange(usize),

    #[error("matrix is not Hermitian: max |M - M^dagger| = {deviation:e}")]
    NotHermitian { deviation: f64 },

    #[error("operation requires a Hermitian-tagged operator")]
    HermitianRequired,

    #[error("non-finite entry encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid state vector: {0}")]
    InvalidState(String),

    #[error("imaginary residue {residue:e} in {context} exceeds tolerance")]
    ImaginaryResidue { context: &'static str, residue: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("matrix exponential overflowed")]
    ExpOverflow,

    #[error("state fully filtered out at t = {time}: survival probability below 1e-300")]
    StateFilteredOut { time: f64 },

    #[error("step-size refinement failed: halving the step still changes the final state by {change:e}")]
    StepSizeFailure { change: f64 },

    #[error("time grid invalid: {0}")]
    InvalidGrid(String),

    #[error("time-dependent measurement generator rejected by {0}")]
    TimeDependentGenerator(&'static str),

    #[error("commutator check failed: max |[H1, H0]| = {norm:e}")]
    CommutatorCheck { norm: f64 },

    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("zero total duration")]
    ZeroDuration,

    #[error("speed radicand {value:e} is negative beyond tolerance")]
    NegativeRadicand { value: f64 },

    #[error("inconsistent QSL inputs: average speed is zero but geodesic distance is {geodesic}")]
    InconsistentQsl { geodesic: f64 },

    #[error("invalid penalty function: {0}")]
    InvalidPenalty(String),

    #[error("invalid measurement spec: {0}")]
    InvalidSpec(String),

    #[error("{0} requires a constant measurement record")]
    NonConstantRecord(&'static str),

    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

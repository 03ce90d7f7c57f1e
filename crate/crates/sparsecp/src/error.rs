use thiserror::Error;

/// Errors produced by the selection, transform and estimation routines.
#[derive(Error, Debug)]
pub enum Error {
    #[error("noise variance sigma^2 is required for Mallows's Cp; use GCV when it is unknown")]
    MissingSigma2,
    #[error("degenerate GCV denominator: nu = {nu} with n = {n}")]
    DegenerateGcv { nu: f64, n: usize },
    #[error("selector failed on Monte-Carlo replicate {replicate}: {source}")]
    SelectorFailure {
        replicate: usize,
        source: Box<Error>,
    },
    #[error("parent array describes a cyclic or out-of-range hierarchy at node {node}")]
    InvalidForest { node: usize },
    #[error("brute-force subtree enumeration is limited to m <= 20, got m = {m}")]
    BruteForceTooLarge { m: usize },
    #[error("input contains NaN at position {index}")]
    NanInput { index: usize },
    #[error("signal too short: n = {n}, need at least {min}")]
    SignalTooShort { n: usize, min: usize },
    #[error("signal is identically zero; no intensity to estimate")]
    AllZeroSignal,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("design column {column} is not standardised: l2 norm {norm}")]
    NotStandardised { column: usize, norm: f64 },
    #[error("design column {column} is constant")]
    ConstantColumn { column: usize },
    #[error("selected design block is rank deficient")]
    RankDeficient,
    #[error("need at least {min} observations, got {n}")]
    TooFewObservations { n: usize, min: usize },
    #[error("search direction is not an ascent direction (g'(0) = {gprime0}); gradient or projection is inconsistent")]
    NotAscentDirection { gprime0: f64 },
    #[error("initial precision matrix is not positive definite or violates the sparsity pattern")]
    InfeasibleInit,
    #[error("empty overlap between criterion domain and degrees-of-freedom table")]
    EmptyOverlap,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

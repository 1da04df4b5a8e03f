use thiserror::Error;

/// Errors raised across the laboratory.
///
/// Precondition failures are separated from numerical and I/O failures so
/// that callers (the CLI in particular) can map them onto distinct exit codes.
#[derive(Debug, Error)]
pub enum RcmError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("ball wraps: radius {radius} exceeds half the torus side {half}")]
    BallWraps { radius: f64, half: usize },
    #[error("degenerate chain: target is the origin")]
    DegenerateChain,
    #[error("invalid environment spec: {0}")]
    Spec(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("non-finite sample at replica {index}: {detail}")]
    NonFinite { index: usize, detail: String },
    #[error("torus too small for t = {t}: wrap bound {bound:e} exceeds tolerance {tol:e}")]
    TorusTooSmall { t: f64, bound: f64, tol: f64 },
    #[error("dense oracle limited to {limit} vertices, got {got}")]
    TooLarge { limit: usize, got: usize },
    #[error("use near-diagonal bound directly: D^2/t = {ratio} <= 1/4")]
    UseNearDiagonal { ratio: f64 },
    #[error("lower bound violated: zero heat kernel at t = {t}, |x-y| = {distance}")]
    LowerBoundViolated { t: f64, distance: u64 },
    #[error("empty valid region: {0}")]
    EmptyRegion(String),
    #[error("missing moment summary")]
    MissingMoments,
    #[error("condition not met anywhere on the radius grid (largest tested {0})")]
    ExceedsGrid(f64),
    #[error("N1 not stabilized within window {0}")]
    NotStabilized(usize),
    #[error("transient dimension required (d >= 3), got d = {0}")]
    TransientDimensionRequired(usize),
    #[error("envelope verification failed: {0}")]
    EnvelopeVerification(String),
    #[error("bad format: {0}")]
    BadFormat(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RcmError> = std::result::Result<T, E>;

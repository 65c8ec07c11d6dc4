use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at {line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, col: usize, message: String) -> Self {
        ParseError { line, col, message }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid map: {reason} (at x = {witness})")]
    InvariantViolation { reason: String, witness: f64 },
    #[error("branch count mismatch: {0} vs {1}")]
    BranchCountMismatch(usize, usize),
    #[error("iterate has {count} branches, more than the cap of {cap}")]
    BranchExplosion { count: usize, cap: usize },
    #[error("stationary solve did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("grid mismatch: {0} vs {1} cells")]
    GridMismatch(usize, usize),
    #[error("empty interval union")]
    EmptyInput,
    #[error("saturation did not stabilize within {0} steps")]
    SaturationUnstable(usize),
    #[error("support endpoint {0} is not covered by any boundary segment")]
    BoundaryNotCovered(f64),
    #[error("boundary segment from {start} exceeded {max_len} steps")]
    SegmentTooLong { start: f64, max_len: usize },
    #[error("trapping region hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("order induction stalled on boundary points {0:?}")]
    OrderCycle(Vec<f64>),
    #[error("trapping region is not forward invariant: image {image:?} escapes by {excess:e}")]
    InvarianceFailed { image: (f64, f64), excess: f64 },
    #[error("inverse-branch contraction left the domain for itinerary {0:?}")]
    ContractionFailure(Vec<usize>),
    #[error("continuation broke the itinerary {0:?}")]
    ItineraryBroken(Vec<usize>),
    #[error("separation condition fails for the unperturbed map")]
    SeparationFailed,
    #[error("trapping region construction failed: {0}")]
    TrappingFailed(Box<Error>),
}

pub type Result<T> = std::result::Result<T, Error>;

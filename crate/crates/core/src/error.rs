use thiserror::Error;

/// Errors produced by chain construction, spectral analysis and the
/// simulated search procedures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("row {row} is not stochastic (sum {sum}, min entry {min})")]
    NotStochastic { row: usize, sum: f64, min: f64 },

    #[error("chain is not ergodic: {0}")]
    NotErgodic(String),

    #[error("weight matrix has disconnected support")]
    Disconnected,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("chain has a negative eigenvalue {value}; lazify it first")]
    NegativeEigenvalue { value: f64 },

    #[error("chain is not reversible (detailed balance violated by {violation})")]
    NonReversible { violation: f64 },

    #[error("linear system is singular")]
    SingularSystem,

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("the +1 eigenspace has dimension {dim}, expected 1")]
    DegeneratePlusOneSpace { dim: usize },

    #[error("walk has no unique fixed vector (fixed space dimension {dim})")]
    NoUniqueFixedVector { dim: usize },

    #[error("state {state} carries zero stationary mass")]
    ZeroMass { state: usize },

    #[error("invalid walk block: {0}")]
    InvalidBlock(String),

    #[error("secular root bracketing failed on ({lo}, {hi})")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("fixed vector is not in the span of the targets (residual {residual})")]
    SpanViolation { residual: f64 },

    #[error("eigenphase {phase} outside [-pi/2, pi/2]")]
    PhaseRangeViolation { phase: f64 },

    #[error("joint state of dimension {dim} exceeds the oracle limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("walk operator has a -1 component on the target (weight {weight})")]
    MinusOnePresent { weight: f64 },

    #[error("vector lies outside the operator domain (residual {residual})")]
    OutsideDomain { residual: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what}: {a} vs {b}")]
    Inconsistent { what: String, a: f64, b: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

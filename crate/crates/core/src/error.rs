use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("critical exponent undefined: homogeneous dimension Q = {0} must exceed 2")]
    CriticalExponentUndefined(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no interior maximum: G monotone (C = {0})")]
    NoInteriorMaximum(f64),

    #[error("mu above fibering threshold for this ray (mu*B = {mu_b}, sup G = {sup_g})")]
    ThresholdExceeded { mu_b: f64, sup_g: f64 },

    #[error("branch empty along ray: {0}")]
    BranchEmpty(String),

    #[error("mu above threshold: mu = {mu} >= {threshold} ({name})")]
    MuAboveThreshold { mu: f64, threshold: f64, name: String },

    /// Carries the best iterate reached.
    #[error("iteration cap reached after {iterations} iterations (residual {residual:e})")]
    IterationCap {
        iterations: usize,
        residual: f64,
        best: Option<Box<crate::nehari_solver::SolveResult>>,
    },

    #[error("epsilon under-resolved: eps = {eps}, {nodes:.1} nodes across the half-height width")]
    UnderResolved { eps: f64, nodes: f64 },

    #[error("no negative-energy minimizer found (energy {0:e})")]
    NoNegativeMinimizer(f64),

    #[error("no pass detected: path maximum {max} within tolerance of endpoint energies")]
    NoPassDetected { max: f64 },

    #[error("solutions coincide: L2 distance {0:e}")]
    SolutionsCoincide(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants fall into two families that callers (notably the CLI) treat
/// differently: violations of the standing hypotheses (non-monotone fields,
/// positive reduced curvature) and numerical failures (Newton divergence,
/// ill-conditioned charts, blowups). See [`Error::is_hypothesis_violation`].
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rank-deficient frame: rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("subspaces are not transversal (intersection dimension {defect})")]
    NotTransversal { defect: usize },

    #[error("frame is not Lagrangian (max |sigma| = {defect:e})")]
    NotLagrangian { defect: f64 },

    #[error("critical point of h: |grad h| = {grad_norm:e}")]
    CriticalPoint { grad_norm: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("implicit step did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonFailed { iterations: usize, residual: f64 },

    #[error("Stormer-Verlet needs a separable mechanical Hamiltonian")]
    NonSeparable,

    #[error("metric is singular at q = {0:?}")]
    SingularMetric(Vec<f64>),

    #[error("graph coordinate undefined (condition number {condition:e})")]
    GraphUndefined { condition: f64 },

    #[error("Laurent fit failed: {0}")]
    LaurentFit(String),

    #[error("splitting is singular: S_circ - S not invertible (condition {condition:e})")]
    SingularSplitting { condition: f64 },

    #[error("degenerate intersection with ker dh: rank {rank}, expected {expected}")]
    DegenerateIntersection { rank: usize, expected: usize },

    #[error("Hamiltonian field is not monotone: signature (+{0}, -{1}, 0:{2})")]
    NotMonotone(usize, usize, usize),

    #[error("Hamiltonian field is not regular: g has {0} null directions")]
    NotRegular(usize),

    #[error("reduced curvature has a positive eigenvalue {eigenvalue:e} (tolerance {tolerance:e})")]
    PositiveCurvature { eigenvalue: f64, tolerance: f64 },

    #[error("curvature does not vanish on ker V (residual {residual:e})")]
    InconsistentPair { residual: f64 },

    #[error("Riccati solution blew up at t = {time}")]
    Blowup { time: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("tangent frame overflow before renormalization")]
    TangentOverflow,

    #[error("sampler failed: {0}")]
    SamplerFailed(String),

    #[error("{excluded} of {total} samples excluded ({hypothesis} hypothesis violations); cap is {cap}")]
    TooManyExclusions {
        excluded: usize,
        total: usize,
        hypothesis: usize,
        cap: f64,
    },
}

impl Error {
    /// True for failures of the curvature hypotheses rather than of numerics.
    pub fn is_hypothesis_violation(&self) -> bool {
        match self {
            Error::NotMonotone(..) | Error::NotRegular(_) | Error::PositiveCurvature { .. } => true,
            Error::TooManyExclusions {
                excluded,
                hypothesis,
                ..
            } => 2 * hypothesis >= *excluded,
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

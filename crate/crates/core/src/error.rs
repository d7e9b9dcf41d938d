use thiserror::Error;

pub type Result<T> = std::result::Result<T, SelError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelError {
    #[error("invalid resolution: n = {0}, need n >= 2")]
    InvalidResolution(usize),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field length {got} does not match {expected} interior nodes")]
    FieldLength { expected: usize, got: usize },

    #[error(
        "borderline regime alpha + beta = 1 (alpha = {alpha}, beta = {beta}): \
         boundary behaviour carries logarithmic corrections that are not modelled"
    )]
    BorderlineRegime { alpha: f64, beta: f64 },

    #[error("SPD solver stagnated after {iterations} iterations (relative residual {residual:.3e})")]
    SolverStagnation { iterations: usize, residual: f64 },

    #[error(
        "comparison principle violated: nonnegative right-hand side gave u = {value:.3e} at node {node}"
    )]
    ComparisonPrincipleViolation { node: usize, value: f64 },

    #[error("inverse iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    EigenNonConvergence { iterations: usize, residual: f64 },

    #[error("linearization point must be positive; u = {value:.3e} at node {node}")]
    InvalidLinearizationPoint { node: usize, value: f64 },

    #[error("field must be positive; value {value:.3e} at node {node}")]
    NonPositiveField { node: usize, value: f64 },

    #[error(
        "supersolution bracket is non-positive at node {node} ({value:.3e}); \
         the discrete eigenfunction lacks a boundary gradient bound, refine the grid"
    )]
    HopfViolation { node: usize, value: f64 },

    #[error(
        "monotone chain broken at iteration {iteration}, node {node}: violation {violation:.3e}"
    )]
    OrderingViolation { iteration: usize, node: usize, violation: f64 },

    #[error("monotone iteration hit max_iter = {iterations} with gap {gap:.3e}")]
    MaxIterExceeded { iterations: usize, gap: f64 },

    #[error("Newton stagnated at iteration {iteration} (weighted residual {residual:.3e})")]
    NewtonStagnation { iteration: usize, residual: f64 },

    #[error("fit window holds {found} nodes, need at least {needed}")]
    WindowTooThin { found: usize, needed: usize },

    #[error("probe ball of radius {radius} around node {node} leaves the domain (d = {distance})")]
    BallOutsideDomain { node: usize, radius: f64, distance: f64 },

    #[error("critical exponent estimates disagree: gradient route {from_sigma}, integral route {from_integral}")]
    InconsistentClassification { from_sigma: f64, from_integral: f64 },

    #[error("dense oracle limited to n <= {max}, got n = {n}")]
    OracleTooLarge { n: usize, max: usize },
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("potential is not positive at r = {r} (q = {value})")]
    NonPositivePotential { r: f64, value: f64 },

    #[error("potential decreases beyond R0 near r = {r}")]
    NotIncreasing { r: f64 },

    #[error("no radius below {cap} reaches q >= {target}")]
    UnboundedSearch { target: f64, cap: f64 },

    #[error("sector {sector} is not available in dimension {space_dim}")]
    InvalidSector { sector: usize, space_dim: usize },

    #[error("eigensolver did not converge within {budget} iterations")]
    ConvergenceFailure { budget: usize },

    #[error("groundstate is not strictly positive at node {node}")]
    NonPositiveGroundstate { node: usize },

    #[error("second eigenvalue attained in the last searched sector {sector}; raise max_sector")]
    SectorBudget { sector: usize },

    #[error("mu = {mu} lies within {tol:e} of an eigenvalue")]
    SingularResolvent { mu: f64, tol: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("consistency check failed: {what} = {value:e} exceeds {tol:e}")]
    CheckFailed {
        what: &'static str,
        value: f64,
        tol: f64,
    },

    #[error("|Lambda - mu| = {distance} is outside the admissible window {window}")]
    WindowViolation { distance: f64, window: f64 },

    #[error(
        "fixed-point iteration stalled after {iterations} iterations (last step {last_step:e})"
    )]
    NoConvergence { iterations: usize, last_step: f64 },

    #[error("iterate left the bracket at iteration {iteration}: {violations} of {nodes} nodes")]
    BracketEscape {
        iteration: usize,
        violations: usize,
        nodes: usize,
    },

    #[error(
        "iterate left the rectangle at iteration {iteration}: {violations} of {nodes} node values"
    )]
    RectangleEscape {
        iteration: usize,
        violations: usize,
        nodes: usize,
    },

    #[error("monotone iteration lost its ordering at iteration {iteration} (defect {defect:e})")]
    MonotonicityBroken { iteration: usize, defect: f64 },

    #[error("{0} changes sign")]
    SignMixed(&'static str),

    #[error("matrix is not cooperative: off-diagonal entries must be positive (b = {b}, c = {c})")]
    NotCooperative { b: f64, c: f64 },
}

impl Error {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ConvergenceFailure { .. }
                | Error::NonPositiveGroundstate { .. }
                | Error::SingularResolvent { .. }
                | Error::CheckFailed { .. }
                | Error::NoConvergence { .. }
                | Error::BracketEscape { .. }
                | Error::RectangleEscape { .. }
                | Error::MonotonicityBroken { .. }
                | Error::SectorBudget { .. }
        )
    }
}

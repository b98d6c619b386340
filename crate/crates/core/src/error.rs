use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("profile is not positive: φ({t}) = {value}")]
    NonPositiveProfile { t: f64, value: f64 },

    #[error("only one periodic variable is supported (requested m = {m})")]
    UnsupportedDimension { m: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear solver stalled after {iterations} iterations (relative residual {residual:e})")]
    SolverDivergence { iterations: usize, residual: f64 },

    #[error("grid metric degenerates at t = {t}")]
    SingularGrid { t: f64 },

    #[error("no bifurcation of the first mode for λ in [{lo}, {hi}]")]
    NoBifurcationInRange { lo: f64, hi: f64 },

    #[error("Newton stagnated after {iterations} iterations (residual {residual:e}, last step {step:e})")]
    NewtonStagnation {
        iterations: usize,
        residual: f64,
        step: f64,
    },

    #[error("slab endpoints ({a}, {b}) are not ordered multiples of λ = {lambda}")]
    BadSlab { a: f64, b: f64, lambda: f64 },

    #[error("domain is not Serrin at this resolution: residual {residual:e} exceeds {tolerance:e}")]
    NotSerrin { residual: f64, tolerance: f64 },

    #[error("primal-dual gap {gap:e} above {tolerance:e} after {iterations} iterations")]
    NonConvergence {
        gap: f64,
        tolerance: f64,
        iterations: usize,
    },

    #[error("gradient margin c_ε = {margin} is not positive for ε = {eps}")]
    CEpsNonPositive { eps: f64, margin: f64 },

    #[error("successive ε-solutions do not contract: {differences:?}")]
    UnboundedSuspected { differences: Vec<f64> },
}

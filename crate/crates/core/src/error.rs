use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{axis} = {value} lies outside the grid span [{lo}, {hi}]")]
    OutOfDomain {
        axis: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// The query point lies on the beam (or its virtual image), where the
    /// dipole kernel is singular.
    #[error("degenerate source distance at depth t = {t}")]
    DegenerateDistance { t: f64 },

    #[error("distribution has zero total mass")]
    ZeroMass,

    #[error("no convergence after {iterations} iterations")]
    IterationLimit { iterations: usize },

    #[error("corrupt table header: {0}")]
    CorruptHeader(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("table invariant violated: {0}")]
    InvariantViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

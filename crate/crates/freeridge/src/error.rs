use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally invalid model or plan.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// S-transform evaluated at (or beyond) a pole.
    #[error("S-transform pole at t = {location}: {context}")]
    Pole { location: f64, context: String },

    /// A requested inverse/root does not exist in the admissible range.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// Iterative solver stopped without meeting tolerance.
    #[error("failed to converge in {context}: residual {residual:e}")]
    Convergence { context: String, residual: f64 },

    /// Risk formula evaluated at a point where the theory diverges
    /// (e.g. gamma -> 1 at an interpolation threshold).
    #[error("risk diverges: {0}")]
    Divergent(String),

    /// Exactly degenerate geometry (tied dimensions at a ridgeless threshold).
    #[error("degenerate configuration: {0}")]
    Singular(String),

    /// Scaling-regime comparison lands inside the crossover margin.
    #[error("regime crossover: {0}")]
    Crossover(String),
}

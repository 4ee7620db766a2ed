use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid simplex spec: {0}")]
    InvalidSpec(String),

    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),

    #[error("polytope is empty")]
    EmptyPolytope,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shrinkage {delta} exceeds maximum shrinkage {max}")]
    OutOfRange { delta: f64, max: f64 },

    #[error("degenerate vertex system: {0}")]
    Degenerate(String),

    #[error("vertex enumeration unsupported for {rows} rows in dimension {dim}")]
    UnsupportedSize { rows: usize, dim: usize },

    #[error("invalid privacy parameter: {0}")]
    InvalidPrivacy(String),

    #[error("invalid delta {0}: must lie in (0, 1)")]
    InvalidDelta(f64),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("no known-safe interior: row {row} has offset {offset} <= 0")]
    NoKnownSafeInterior { row: usize, offset: f64 },

    #[error("horizon too short: pure exploration needs {t_prime} rounds but horizon is {horizon}")]
    HorizonTooShort { t_prime: f64, horizon: usize },

    #[error("conservative safe set is infeasible: {0}")]
    InfeasibleSafeSet(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("division by zero in {0}")]
    DivisionByZero(String),

    #[error("budget {budget} is infeasible; the smallest feasible budget is {min_budget}")]
    InfeasibleBudget { budget: f64, min_budget: f64 },

    #[error("budget infeasible for agent {agent}")]
    AgentInfeasible { agent: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("mismatched horizons: {0} vs {1}")]
    MismatchedHorizons(usize, usize),

    #[error("round {round}: {source}")]
    AtRound {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

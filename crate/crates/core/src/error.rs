use thiserror::Error;

/// Errors raised by operators, problem generators, solvers and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("row index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("singular value decomposition failed: {0}")]
    Svd(String),

    #[error("cone constant undefined: every sampled denominator vanished")]
    UndefinedEstimate,

    #[error("reference image has a zero component at row {index}")]
    SingularReference { index: usize },

    #[error("iterate diverged at iteration {iteration}")]
    Diverged { iteration: u64 },

    #[error("trial {trial} diverged at iteration {iteration}")]
    TrialDiverged { trial: usize, iteration: u64 },

    #[error("enumeration budget exceeded: {paths} paths > {budget}")]
    BudgetExceeded { paths: f64, budget: f64 },

    #[error("operation requires a linear (identity) forward operator")]
    NotLinear,

    #[error("infeasible constants: {0}")]
    InfeasibleConstants(String),

    #[error("no snapshot recorded at epoch {0}")]
    EpochNotRecorded(f64),

    #[error("problem container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

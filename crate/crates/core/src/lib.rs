//! Iterative regularization for discretized ill-posed inverse problems.
//!
//! The crate implements stochastic gradient descent with an optional
//! data-driven regularization term (a truncated-SVD surrogate of the forward
//! matrix), its full-gradient Landweber counterparts, the phillips / gravity /
//! shaw benchmark problems, and numerical checks for the error recursions and
//! bounds that govern these methods.
//!
//! Conventions used throughout:
//! - rows `a_i` are stored unscaled and indexed from zero;
//! - data-space norms are RMS norms, solution-space norms are Euclidean;
//! - an epoch is `n` stochastic iterations or one full-gradient iteration.

pub mod analysis;
pub mod container;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod operators;
pub mod problems;
pub mod rng;
pub mod solvers;

pub use ensemble::{run_ensemble, DataSource, Ensemble, Method, SolverConfig};
pub use error::{Error, Result};
pub use linalg::{Matrix, Svd};
pub use operators::{truncate_svd, AssumptionConstants, DataDrivenOp, ForwardOp, Nonlinearity, RowOperator};
pub use problems::{add_noise, make_gravity, make_phillips, make_shaw, squared_variant, NoisyData, Problem};
pub use solvers::{dsgd_run, landweber_run, Recording, RunOptions, Schedule, StoppingRule, Trajectory};

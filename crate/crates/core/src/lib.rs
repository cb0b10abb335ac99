//! Sequential rank-1 low-rank linear regression.
//!
//! A label matrix `Y` (`m × n`) is explained as `W X` with a low-rank `W`
//! (`m × d`) built one rank-1 term at a time. After each term is fitted the
//! residual is deflated and the next term fits what is left.
//!
//! - [`linalg`]: dense matrices, SVD and least-squares helpers.
//! - [`datagen`]: synthetic instances with planted spectra and noise.
//! - [`solver`]: exact and gradient-descent sequential solvers.
//! - [`bounds`]: error-propagation bounds and perturbation checkers.

pub mod bounds;
pub mod datagen;
pub mod linalg;
pub mod rng;
pub mod solver;

pub use datagen::{Dataset, GroundTruth, NoiseKind, NoiseSpec, Profile};
pub use linalg::{DenseMatrix, LinalgError, SingularTriple, SvdResult};
pub use solver::{
    AllocationPlan, AllocationStrategy, Design, GdConfig, RankOneComponent, SolveError, SolveMode, SolveTrace,
    StepSize,
};

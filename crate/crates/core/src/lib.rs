//! Sparsity-constrained optimization with hard thresholding: the tight
//! deviation bound of the thresholding operator, batch and stochastic
//! solvers, convergence calculators and an experiment harness.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod objectives;
pub mod parallel;
pub mod rng;
pub mod solvers;
pub mod thresholding;
pub mod vector;

pub use error::{Error, IdxError, Result};
pub use objectives::{
    LinearModel, LogisticLoss, ObjectiveModel, RegularizedLeastSquares, RegularizedLogistic, SensingProblem,
    SquaredLoss,
};
pub use parallel::Execution;
pub use vector::{DenseVector, SupportSet};

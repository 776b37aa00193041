//! Hard-thresholding solvers.

mod batch;
mod stochastic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::objectives::{heuristic_step_size, SensingProblem};

pub use batch::{cosamp, grasp, iht, pgd};
pub use stochastic::{ht_saga, ht_saga_with_state, ht_svrg, saga_default_step, SagaConfig, SagaState, SnapshotRule, SvrgConfig};

/// Objective values above this count as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e120;

/// Learning rate: a fixed value or `2 / σ_max(AAᵀ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    Fixed(f64),
    #[default]
    Heuristic,
}

impl StepSize {
    pub fn resolve(self, problem: &SensingProblem) -> Result<f64> {
        match self {
            StepSize::Fixed(eta) if eta.is_finite() && eta >= 0.0 => Ok(eta),
            StepSize::Fixed(eta) => invalid(format!("step size must be finite and nonnegative, got {eta}")),
            StepSize::Heuristic => heuristic_step_size(problem),
        }
    }
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Projection sparsity.
    pub k: usize,
    pub step: StepSize,
    pub max_iters: usize,
    /// Stop once the model residual (‖y − Ax‖ for least squares) is at most this.
    pub tol_residual: f64,
    /// Stop once ‖xᵗ − xᵗ⁻¹‖₂ is at most this.
    pub tol_change: f64,
    /// ℓ₂ radius; `None` skips the ball projection.
    pub omega: Option<f64>,
    pub rng_seed: u64,
    pub record_trace: bool,
    /// Starting point, zero when absent. Thresholded to `k` entries first.
    pub initial: Option<Vec<f64>>,
}

impl SolverConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            step: StepSize::Fixed(1.0),
            max_iters: 1000,
            tol_residual: 1e-12,
            tol_change: 1e-14,
            omega: None,
            rng_seed: 0,
            record_trace: false,
            initial: None,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.k == 0 {
            return invalid("projection sparsity k must be at least 1");
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if !(self.tol_residual >= 0.0) || !(self.tol_change >= 0.0) {
            return invalid("tolerances must be nonnegative");
        }
        check_omega(self.omega)?;
        if let Some(x0) = &self.initial {
            if x0.len() != d {
                return invalid(format!("initial point has length {}, expected {d}", x0.len()));
            }
        }
        Ok(())
    }
}

/// Rejects nonpositive radii.
pub fn check_omega(omega: Option<f64>) -> Result<()> {
    match omega {
        Some(w) if !(w > 0.0) => invalid(format!("ball radius must be positive, got {w}")),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TolResidual,
    TolChange,
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub x_final: Vec<f64>,
    /// Iterations for batch solvers, stages for HT-SVRG, steps for HT-SAGA.
    pub iterations_run: usize,
    pub objective_trace: Vec<f64>,
    pub residual_trace: Vec<f64>,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Step size actually used.
    pub eta: f64,
    /// A restricted least-squares system was solved in the minimum-norm sense.
    pub rank_deficient: bool,
    /// An inner restricted minimization stopped at its step cap.
    pub inner_cap_hit: bool,
}

impl SolverReport {
    pub fn diverged(&self) -> bool {
        self.stop_reason == StopReason::Diverged
    }
}

pub(crate) fn is_divergent(objective: f64) -> bool {
    !objective.is_finite() || objective > DIVERGENCE_THRESHOLD
}

/// Solver names as used on the command line and in result files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverKind {
    #[serde(rename = "iht")]
    Iht,
    #[serde(rename = "pgd")]
    Pgd,
    #[serde(rename = "cosamp")]
    Cosamp,
    #[serde(rename = "grasp")]
    Grasp,
    #[serde(rename = "ht-svrg")]
    HtSvrg,
    #[serde(rename = "ht-saga")]
    HtSaga,
}

impl SolverKind {
    pub const ALL: [SolverKind; 6] = [
        SolverKind::Iht,
        SolverKind::Pgd,
        SolverKind::Cosamp,
        SolverKind::Grasp,
        SolverKind::HtSvrg,
        SolverKind::HtSaga,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Iht => "iht",
            SolverKind::Pgd => "pgd",
            SolverKind::Cosamp => "cosamp",
            SolverKind::Grasp => "grasp",
            SolverKind::HtSvrg => "ht-svrg",
            SolverKind::HtSaga => "ht-saga",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown solver `{s}`")))
    }
}

/// Per-step feasibility check, active in debug and test builds.
#[inline]
pub(crate) fn debug_feasible(x: &[f64], k: usize, omega: Option<f64>) {
    debug_assert!(crate::vector::nnz(x) <= k, "iterate has more than {k} nonzeros");
    debug_assert!(
        omega.is_none_or(|w| !x.iter().all(|v| v.is_finite()) || crate::vector::norm2(x) <= w * (1.0 + 1e-12)),
        "iterate left the ℓ₂ ball"
    );
}

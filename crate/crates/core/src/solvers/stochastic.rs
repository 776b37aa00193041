//! Variance-reduced stochastic solvers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::objectives::{estimate_restricted_curvature, CurvatureProbe, ObjectiveModel};
use crate::rng;
use crate::thresholding::{project_l2_ball_in_place, Thresholder};
use crate::vector::dist2;

use super::{check_omega, debug_feasible, is_divergent, SolverReport, StepSize, StopReason};

/// Which inner iterate becomes the next snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotRule {
    /// `x^j` with `j` uniform on `{0, …, m−1}`.
    #[default]
    UniformJ,
    LastIterate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrgConfig {
    /// Maximum stage count.
    pub stages: usize,
    /// Inner steps per stage.
    pub m: usize,
    pub k: usize,
    pub eta: StepSize,
    /// ℓ₂ radius; `None` means unconstrained.
    pub omega: Option<f64>,
    pub rng_seed: u64,
    pub snapshot_rule: SnapshotRule,
    pub record_stage_objectives: bool,
    /// Early stop once the model residual at the snapshot is at most this.
    pub tol_residual: f64,
    /// Early stop once a whole stage moves the iterate by at most this.
    pub tol_change: f64,
    pub initial: Option<Vec<f64>>,
}

impl SvrgConfig {
    pub fn new(k: usize, m: usize) -> Self {
        Self {
            stages: 10_000,
            m,
            k,
            eta: StepSize::Heuristic,
            omega: None,
            rng_seed: 0,
            snapshot_rule: SnapshotRule::UniformJ,
            record_stage_objectives: false,
            tol_residual: 1e-12,
            tol_change: 0.0,
            initial: None,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.stages == 0 || self.m == 0 {
            return invalid("stage count and update frequency must be at least 1");
        }
        if self.k == 0 {
            return invalid("projection sparsity k must be at least 1");
        }
        if let StepSize::Fixed(eta) = self.eta {
            if !(eta > 0.0) || !eta.is_finite() {
                return invalid(format!("learning rate must be positive, got {eta}"));
            }
        }
        if !(self.tol_residual >= 0.0) || !(self.tol_change >= 0.0) {
            return invalid("tolerances must be nonnegative");
        }
        check_omega(self.omega)?;
        if matches!(&self.initial, Some(x0) if x0.len() != d) {
            return invalid(format!("initial point must have length {d}"));
        }
        Ok(())
    }
}

fn project(x: &mut [f64], k: usize, omega: Option<f64>, th: &mut Thresholder) {
    th.apply(x, k);
    if let Some(w) = omega {
        project_l2_ball_in_place(x, w);
    }
}

/// HT-SVRG. `iterations_run` counts stages; traces hold one entry per stage.
///
/// Sample indices come from stream 0 of the seed and snapshot indices from
/// stream 1. Under [`SnapshotRule::UniformJ`] the stage stops as soon as the
/// chosen iterate is reached (at least one step is always taken so that
/// stage movement is measurable); later iterates would be discarded anyway.
pub fn ht_svrg(model: &dyn ObjectiveModel, config: &SvrgConfig) -> Result<SolverReport> {
    let (n, d) = (model.num_samples(), model.dim());
    config.validate(d)?;
    let eta = config.eta.resolve(model.problem())?;
    let mut samples = rng::stream(config.rng_seed, 0);
    let mut snapshots = rng::stream(config.rng_seed, 1);
    let mut th = Thresholder::new();

    let mut snapshot = config.initial.clone().unwrap_or_else(|| vec![0.0; d]);
    project(&mut snapshot, config.k, config.omega, &mut th);
    let mut mu = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut captured = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut objective_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut stop = StopReason::MaxIters;
    let mut stages_run = config.stages;

    'stages: for s in 1..=config.stages {
        model.full_gradient(&snapshot, &mut mu);
        let j = snapshots.gen_range(0..config.m);
        let steps = match config.snapshot_rule {
            SnapshotRule::UniformJ => j.max(1),
            SnapshotRule::LastIterate => config.m,
        };
        x.copy_from_slice(&snapshot);
        if j == 0 {
            captured.copy_from_slice(&snapshot);
        }
        for t in 1..=steps {
            let i = samples.gen_range(0..n);
            for ((bi, xi), g) in b.iter_mut().zip(&x).zip(&mu) {
                *bi = xi - eta * g;
            }
            model.add_sample_gradient_difference(i, &x, &snapshot, -eta, &mut b);
            project(&mut b, config.k, config.omega, &mut th);
            debug_feasible(&b, config.k, config.omega);
            std::mem::swap(&mut x, &mut b);
            if x.iter().any(|v| !v.is_finite()) {
                if config.record_stage_objectives {
                    objective_trace.push(f64::INFINITY);
                    residual_trace.push(f64::INFINITY);
                }
                snapshot.copy_from_slice(&x);
                stop = StopReason::Diverged;
                stages_run = s;
                break 'stages;
            }
            if t == j {
                captured.copy_from_slice(&x);
            }
        }
        let movement = dist2(&x, &snapshot);
        match config.snapshot_rule {
            SnapshotRule::UniformJ => std::mem::swap(&mut snapshot, &mut captured),
            SnapshotRule::LastIterate => snapshot.copy_from_slice(&x),
        }
        let objective = model.value(&snapshot);
        if is_divergent(objective) {
            if config.record_stage_objectives {
                objective_trace.push(objective);
                residual_trace.push(f64::INFINITY);
            }
            stop = StopReason::Diverged;
            stages_run = s;
            break;
        }
        let residual = model.residual(&snapshot);
        if config.record_stage_objectives {
            objective_trace.push(objective);
            residual_trace.push(residual);
        }
        if residual <= config.tol_residual {
            stop = StopReason::TolResidual;
            stages_run = s;
            break;
        }
        if movement <= config.tol_change {
            stop = StopReason::TolChange;
            stages_run = s;
            break;
        }
    }
    Ok(SolverReport {
        x_final: snapshot,
        iterations_run: stages_run,
        objective_trace,
        residual_trace,
        converged: matches!(stop, StopReason::TolResidual | StopReason::TolChange),
        stop_reason: stop,
        eta,
        rank_deficient: false,
        inner_cap_hit: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SagaConfig {
    /// Total single-sample steps.
    pub steps: usize,
    pub k: usize,
    /// `None` picks [`saga_default_step`].
    pub eta: Option<f64>,
    pub omega: Option<f64>,
    pub rng_seed: u64,
    /// Objective/residual are evaluated (and stopping checked) every this many
    /// steps; `0` means every `n` steps.
    pub check_every: usize,
    pub record_trace: bool,
    pub tol_residual: f64,
    pub initial: Option<Vec<f64>>,
}

impl SagaConfig {
    pub fn new(k: usize, steps: usize) -> Self {
        Self {
            steps,
            k,
            eta: None,
            omega: None,
            rng_seed: 0,
            check_every: 0,
            record_trace: false,
            tol_residual: 0.0,
            initial: None,
        }
    }
}

/// Gradient table of HT-SAGA.
#[derive(Debug, Clone)]
pub struct SagaState {
    /// Row `i` (length `d`) holds `∇f_i(φ_i)`.
    pub gradient_table: Vec<f64>,
    pub table_average: Vec<f64>,
    pub x: Vec<f64>,
    d: usize,
}

impl SagaState {
    pub fn new(model: &dyn ObjectiveModel, x: Vec<f64>) -> Self {
        let (n, d) = (model.num_samples(), model.dim());
        let mut table = vec![0.0; n * d];
        for (i, row) in table.chunks_exact_mut(d).enumerate() {
            model.sample_gradient(i, &x, row);
        }
        let mut state = Self {
            gradient_table: table,
            table_average: vec![0.0; d],
            x,
            d,
        };
        state.table_average = state.recomputed_average();
        state
    }

    pub fn entry(&self, i: usize) -> &[f64] {
        &self.gradient_table[i * self.d..(i + 1) * self.d]
    }

    pub fn recomputed_average(&self) -> Vec<f64> {
        let n = self.gradient_table.len() / self.d;
        let mut avg = vec![0.0; self.d];
        for row in self.gradient_table.chunks_exact(self.d) {
            avg.iter_mut().zip(row).for_each(|(a, g)| *a += g);
        }
        avg.iter_mut().for_each(|a| *a /= n as f64);
        avg
    }

    /// `‖running − recomputed‖` relative to the mean norm of the table
    /// entries (the scale of the summands; the mean itself can cancel to
    /// nearly zero near an optimum).
    pub fn average_drift(&self) -> f64 {
        let fresh = self.recomputed_average();
        let rows = self.gradient_table.len() / self.d;
        let scale = self
            .gradient_table
            .chunks_exact(self.d)
            .map(crate::vector::norm2)
            .sum::<f64>()
            / rows as f64;
        dist2(&self.table_average, &fresh) / scale.max(1e-300)
    }
}

/// `1 / (2(αn + L))` with `α` the RSC estimate of `F` and `L` the exact
/// per-sample restricted smoothness, both at sparsity `min(2k, d)`.
pub fn saga_default_step(model: &dyn ObjectiveModel, k: usize, seed: u64) -> Result<f64> {
    let r = (2 * k).min(model.dim()).max(1);
    let est = estimate_restricted_curvature(model, &CurvatureProbe::new(r, seed))?;
    let n = model.num_samples() as f64;
    Ok(1.0 / (2.0 * (est.alpha_objective * n + est.l_sample_max)))
}

/// HT-SAGA. `iterations_run` counts single-sample steps; traces hold one
/// entry per check.
pub fn ht_saga(model: &dyn ObjectiveModel, config: &SagaConfig) -> Result<SolverReport> {
    ht_saga_with_state(model, config).map(|(r, _)| r)
}

/// [`ht_saga`], also returning the final gradient table.
pub fn ht_saga_with_state(model: &dyn ObjectiveModel, config: &SagaConfig) -> Result<(SolverReport, SagaState)> {
    let (n, d) = (model.num_samples(), model.dim());
    if config.k == 0 || config.steps == 0 {
        return invalid("sparsity and step count must be at least 1");
    }
    check_omega(config.omega)?;
    let eta = match config.eta {
        Some(eta) if eta > 0.0 && eta.is_finite() => eta,
        Some(eta) => return invalid(format!("learning rate must be positive, got {eta}")),
        None => saga_default_step(model, config.k, config.rng_seed)?,
    };
    let every = if config.check_every == 0 { n } else { config.check_every };
    let mut th = Thresholder::new();
    let mut x0 = config.initial.clone().unwrap_or_else(|| vec![0.0; d]);
    if x0.len() != d {
        return invalid(format!("initial point must have length {d}"));
    }
    project(&mut x0, config.k, config.omega, &mut th);
    let mut state = SagaState::new(model, x0);
    let mut samples = rng::stream(config.rng_seed, 0);
    let mut fresh = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut objective_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut stop = StopReason::MaxIters;
    let mut steps_run = config.steps;
    let inv_n = 1.0 / n as f64;

    for t in 1..=config.steps {
        let j = samples.gen_range(0..n);
        model.sample_gradient(j, &state.x, &mut fresh);
        let row = &mut state.gradient_table[j * d..(j + 1) * d];
        for i in 0..d {
            let old = row[i];
            b[i] = state.x[i] - eta * (fresh[i] - old + state.table_average[i]);
            state.table_average[i] += (fresh[i] - old) * inv_n;
            row[i] = fresh[i];
        }
        project(&mut b, config.k, config.omega, &mut th);
        debug_feasible(&b, config.k, config.omega);
        std::mem::swap(&mut state.x, &mut b);
        let finite = state.x.iter().all(|v| v.is_finite());
        if !finite || t % every == 0 || t == config.steps {
            let objective = if finite { model.value(&state.x) } else { f64::INFINITY };
            if is_divergent(objective) {
                if config.record_trace {
                    objective_trace.push(objective);
                    residual_trace.push(f64::INFINITY);
                }
                stop = StopReason::Diverged;
                steps_run = t;
                break;
            }
            let residual = model.residual(&state.x);
            if config.record_trace {
                objective_trace.push(objective);
                residual_trace.push(residual);
            }
            if residual <= config.tol_residual {
                stop = StopReason::TolResidual;
                steps_run = t;
                break;
            }
        }
    }
    let report = SolverReport {
        x_final: state.x.clone(),
        iterations_run: steps_run,
        objective_trace,
        residual_trace,
        converged: stop == StopReason::TolResidual,
        stop_reason: stop,
        eta,
        rank_deficient: false,
        inner_cap_hit: false,
    };
    Ok((report, state))
}

//! Full-gradient solvers.

use crate::error::Result;
use crate::objectives::{ObjectiveModel, RegularizedLeastSquares, SensingProblem};
use crate::thresholding::{project_l2_ball_in_place, Thresholder};
use crate::vector::{dist2, norm2, support_of};

use super::{debug_feasible, is_divergent, SolverConfig, SolverReport, StopReason};

const INNER_TOL: f64 = 1e-8;
const INNER_CAP: usize = 500;

/// Trace and stopping bookkeeping shared by the batch loops.
struct Run<'a> {
    cfg: &'a SolverConfig,
    objective_trace: Vec<f64>,
    residual_trace: Vec<f64>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a SolverConfig) -> Self {
        Self {
            cfg,
            objective_trace: Vec::new(),
            residual_trace: Vec::new(),
        }
    }

    /// Records iteration state and returns a stop reason if one applies.
    fn check(&mut self, model: &dyn ObjectiveModel, x: &[f64], change: f64) -> Option<StopReason> {
        let objective = model.value(x);
        if is_divergent(objective) || x.iter().any(|v| !v.is_finite()) {
            if self.cfg.record_trace {
                self.objective_trace.push(objective);
                self.residual_trace.push(f64::INFINITY);
            }
            return Some(StopReason::Diverged);
        }
        let residual = model.residual(x);
        if self.cfg.record_trace {
            self.objective_trace.push(objective);
            self.residual_trace.push(residual);
        }
        if residual <= self.cfg.tol_residual {
            Some(StopReason::TolResidual)
        } else if change <= self.cfg.tol_change {
            Some(StopReason::TolChange)
        } else {
            None
        }
    }

    fn finish(self, x: Vec<f64>, iterations: usize, stop: StopReason, eta: f64) -> SolverReport {
        SolverReport {
            x_final: x,
            iterations_run: iterations,
            objective_trace: self.objective_trace,
            residual_trace: self.residual_trace,
            converged: matches!(stop, StopReason::TolResidual | StopReason::TolChange),
            stop_reason: stop,
            eta,
            rank_deficient: false,
            inner_cap_hit: false,
        }
    }
}

fn starting_point(cfg: &SolverConfig, d: usize, th: &mut Thresholder) -> Vec<f64> {
    let mut x = cfg.initial.clone().unwrap_or_else(|| vec![0.0; d]);
    th.apply(&mut x, cfg.k);
    if let Some(w) = cfg.omega {
        project_l2_ball_in_place(&mut x, w);
    }
    x
}

/// Iterative hard thresholding, `xᵗ = H_k(xᵗ⁻¹ + η Aᵀ(y − A xᵗ⁻¹))`.
///
/// `omega` is ignored.
pub fn iht(problem: &SensingProblem, config: &SolverConfig) -> Result<SolverReport> {
    let model = RegularizedLeastSquares::new(problem.clone(), 0.0)?;
    let cfg = SolverConfig {
        omega: None,
        ..config.clone()
    };
    pgd(&model, &cfg)
}

/// Projected gradient descent, `xᵗ = Π_ω(H_k(xᵗ⁻¹ − η Σᵢ∇fᵢ(xᵗ⁻¹)))`.
///
/// The step is taken on the summed gradient `n∇F`, so least squares with
/// `γ = 0` and `η = 1` is exactly IHT.
pub fn pgd(model: &dyn ObjectiveModel, config: &SolverConfig) -> Result<SolverReport> {
    let d = model.dim();
    config.validate(d)?;
    let eta = config.step.resolve(model.problem())?;
    let mut th = Thresholder::new();
    let mut x = starting_point(config, d, &mut th);
    let mut next = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut run = Run::new(config);
    for t in 1..=config.max_iters {
        model.sum_gradient(&x, &mut g);
        for ((b, xi), gi) in next.iter_mut().zip(&x).zip(&g) {
            *b = xi - eta * gi;
        }
        th.apply(&mut next, config.k);
        if let Some(w) = config.omega {
            project_l2_ball_in_place(&mut next, w);
        }
        debug_feasible(&next, config.k, config.omega);
        let change = dist2(&next, &x);
        std::mem::swap(&mut x, &mut next);
        if let Some(stop) = run.check(model, &x, change) {
            return Ok(run.finish(x, t, stop, eta));
        }
    }
    Ok(run.finish(x, config.max_iters, StopReason::MaxIters, eta))
}

/// CoSaMP: merge the top `2k` proxy entries with the current support, solve
/// least squares there, keep the `k` largest coefficients.
///
/// The step size and `omega` are ignored.
pub fn cosamp(problem: &SensingProblem, config: &SolverConfig) -> Result<SolverReport> {
    let model = RegularizedLeastSquares::new(problem.clone(), 0.0)?;
    let cfg = SolverConfig {
        omega: None,
        ..config.clone()
    };
    grasp(&model, &cfg)
}

/// GraSP: CoSaMP with the proxy replaced by `∇F` and the least-squares solve
/// by a restricted minimization of the model.
///
/// Models without a closed-form restricted minimizer use backtracking
/// gradient descent on the candidate support. The step size is ignored.
pub fn grasp(model: &dyn ObjectiveModel, config: &SolverConfig) -> Result<SolverReport> {
    let d = model.dim();
    config.validate(d)?;
    let mut th = Thresholder::new();
    let mut x = starting_point(config, d, &mut th);
    let mut g = vec![0.0; d];
    let mut run = Run::new(config);
    let (mut rank_deficient, mut cap_hit) = (false, false);
    let mut stop = StopReason::MaxIters;
    let mut iterations = config.max_iters;
    for t in 1..=config.max_iters {
        model.sum_gradient(&x, &mut g);
        let candidate = merge_support(th.top_k(&g, 2 * config.k), &support_of(&x));
        let mut next = match model.restricted_minimizer(&candidate) {
            Some((z, deficient)) => {
                rank_deficient |= deficient;
                z
            }
            None => {
                let (z, hit) = restricted_descent(model, &x, &candidate);
                cap_hit |= hit;
                z
            }
        };
        th.apply(&mut next, config.k);
        if let Some(w) = config.omega {
            project_l2_ball_in_place(&mut next, w);
        }
        debug_feasible(&next, config.k, config.omega);
        let change = dist2(&next, &x);
        x = next;
        if let Some(s) = run.check(model, &x, change) {
            stop = s;
            iterations = t;
            break;
        }
    }
    let mut report = run.finish(x, iterations, stop, 0.0);
    report.rank_deficient = rank_deficient;
    report.inner_cap_hit = cap_hit;
    Ok(report)
}

/// Sorted union of two index sets.
fn merge_support(mut a: Vec<usize>, b: &[usize]) -> Vec<usize> {
    a.extend_from_slice(b);
    a.sort_unstable();
    a.dedup();
    a
}

/// Minimizes `F` over vectors supported on `support` from `x0`; returns the
/// minimizer and whether the step cap was hit.
fn restricted_descent(model: &dyn ObjectiveModel, x0: &[f64], support: &[usize]) -> (Vec<f64>, bool) {
    let d = model.dim();
    let mut x = vec![0.0; d];
    for &j in support {
        x[j] = x0[j];
    }
    let mut g = vec![0.0; d];
    let mut gs = vec![0.0; support.len()];
    let mut trial = x.clone();
    let mut fx = model.value(&x);
    let mut step = 1.0;
    for _ in 0..INNER_CAP {
        model.full_gradient(&x, &mut g);
        for (o, &j) in gs.iter_mut().zip(support) {
            *o = g[j];
        }
        let gnorm2: f64 = gs.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() <= INNER_TOL {
            return (x, false);
        }
        // Armijo backtracking, with the accepted step grown for the next round.
        loop {
            for (&j, gj) in support.iter().zip(&gs) {
                trial[j] = x[j] - step * gj;
            }
            let ft = model.value(&trial);
            if ft <= fx - 0.5 * step * gnorm2 {
                fx = ft;
                x.copy_from_slice(&trial);
                step *= 2.0;
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                return (x, false);
            }
        }
    }
    model.full_gradient(&x, &mut g);
    let left = norm2(&support.iter().map(|&j| g[j]).collect::<Vec<_>>());
    (x, left > INNER_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::RegularizedLogistic;
    use crate::solvers::StepSize;
    use nalgebra::DMatrix;

    fn identity3(y: [f64; 3]) -> SensingProblem {
        SensingProblem::new(DMatrix::identity(3, 3), y.to_vec()).unwrap()
    }

    #[test]
    fn iht_identity_one_step() {
        let mut cfg = SolverConfig::new(1);
        cfg.record_trace = true;
        let r = iht(&identity3([0.0, 2.0, 0.0]), &cfg).unwrap();
        assert_eq!(r.x_final, vec![0.0, 2.0, 0.0]);
        assert_eq!(r.iterations_run, 1);
        assert!(r.converged);
        assert_eq!(r.objective_trace.len(), 1);
    }

    #[test]
    fn zero_measurements_stay_at_zero() {
        let p = identity3([0.0; 3]);
        for r in [iht(&p, &SolverConfig::new(2)).unwrap(), cosamp(&p, &SolverConfig::new(2)).unwrap()] {
            assert_eq!(r.x_final, vec![0.0; 3]);
            assert_eq!(r.iterations_run, 1);
            assert!(r.converged);
        }
    }

    #[test]
    fn zero_step_stays_put() {
        let p = identity3([1.0, 2.0, 3.0]);
        let model = RegularizedLeastSquares::new(p, 0.0).unwrap();
        let mut cfg = SolverConfig::new(2);
        cfg.step = StepSize::Fixed(0.0);
        cfg.initial = Some(vec![0.5, 0.0, 0.0]);
        let r = pgd(&model, &cfg).unwrap();
        assert_eq!(r.x_final, vec![0.5, 0.0, 0.0]);
        assert_eq!(r.stop_reason, StopReason::TolChange);
    }

    #[test]
    fn logistic_grasp_respects_ball() {
        let p = SensingProblem::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]), vec![1.0, -1.0]).unwrap();
        let model = RegularizedLogistic::new(p, 0.0).unwrap();
        let mut cfg = SolverConfig::new(1);
        cfg.omega = Some(5.0);
        cfg.max_iters = 20;
        let r = grasp(&model, &cfg).unwrap();
        assert!(norm2(&r.x_final) <= 5.0 + 1e-12);
        assert!(norm2(&r.x_final) > 4.99);
    }

    #[test]
    fn merge_is_sorted_union() {
        assert_eq!(merge_support(vec![5, 1], &[1, 3]), vec![1, 3, 5]);
    }
}

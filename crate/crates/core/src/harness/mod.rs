//! Synthetic recovery experiments, MNIST tasks and result files.

mod mnist;
mod results;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::objectives::{LinearModel, SensingProblem, SquaredLoss};
use crate::parallel::{map_indexed, Execution};
use crate::rng::{self, splitmix64, trial_seed};
use crate::solvers::{
    cosamp, grasp, ht_saga, ht_svrg, iht, pgd, SagaConfig, SnapshotRule, SolverConfig, SolverKind, SolverReport,
    StepSize, SvrgConfig,
};

pub use mnist::{
    classify_experiment, load_mnist_idx, pairwise_task, ClassificationResult, ClassifyConfig, KOutcome, MnistDataset,
    Split, DIGIT_PAIRS,
};
pub use results::{read_json_results, read_results, write_results, ResultFormat, ResultRow, CSV_HEADER, SCHEMA_VERSION};

/// Default relative-error threshold for counting a trial as recovered.
pub const SUCCESS_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    #[default]
    Gaussian,
    /// `±1/√n` with equal probability.
    Rademacher,
}

/// Generation parameters of one synthetic recovery problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub d: usize,
    #[serde(rename = "K")]
    pub big_k: usize,
    pub noise_sigma: f64,
    pub design: Design,
}

impl Scenario {
    pub fn noiseless(n: usize, d: usize, big_k: usize) -> Self {
        Self {
            n,
            d,
            big_k,
            noise_sigma: 0.0,
            design: Design::Gaussian,
        }
    }
}

/// Design with i.i.d. variance-`1/n` entries, a `K`-sparse signal with
/// uniformly random support and standard normal nonzeros, and
/// `y = A x + ε`, `ε ~ N(0, σ²I)`.
pub fn generate_sensing_problem(scenario: &Scenario, seed: u64) -> Result<SensingProblem> {
    let Scenario {
        n,
        d,
        big_k,
        noise_sigma,
        design,
    } = *scenario;
    if n == 0 || d == 0 {
        return invalid(format!("need n ≥ 1 and d ≥ 1, got n={n}, d={d}"));
    }
    if big_k == 0 || big_k > d {
        return invalid(format!("true sparsity K must lie in 1..={d}, got {big_k}"));
    }
    if !(noise_sigma >= 0.0) {
        return invalid(format!("noise level must be nonnegative, got {noise_sigma}"));
    }
    let mut rng = rng::stream(seed, 0);
    let scale = 1.0 / (n as f64).sqrt();
    let a = match design {
        Design::Gaussian => DMatrix::from_fn(n, d, |_, _| scale * rng.sample::<f64, _>(StandardNormal)),
        Design::Rademacher => DMatrix::from_fn(n, d, |_, _| if rng.gen::<bool>() { scale } else { -scale }),
    };
    let mut x = vec![0.0; d];
    for j in sample(&mut rng, d, big_k) {
        x[j] = rng.sample(StandardNormal);
    }
    let mut y = vec![0.0; n];
    crate::linalg::mul_sparse(&a, &x, &mut y);
    if noise_sigma > 0.0 {
        for v in &mut y {
            *v += noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    SensingProblem::new(a, y)?.with_truth(x, noise_sigma)
}

/// How the projection sparsity follows the true sparsity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KRule {
    Fixed(usize),
    /// `k = factor · K`, capped at `d`.
    TimesTrue(usize),
}

impl KRule {
    pub fn resolve(self, big_k: usize, d: usize) -> usize {
        match self {
            KRule::Fixed(k) => k,
            KRule::TimesTrue(f) => (f * big_k).min(d),
        }
        .max(1)
    }
}

/// A solver together with everything needed to configure it per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverPlan {
    pub solver: SolverKind,
    pub k: KRule,
    pub step: StepSize,
    /// HT-SVRG stage budget `S`; batch solvers get `(2m/n + 1)S` iterations
    /// and HT-SAGA `(2m + n)S` single-sample steps unless overridden.
    pub stages: usize,
    /// Update frequency; `None` means `3n`.
    pub m: Option<usize>,
    pub batch_iters: Option<usize>,
    pub omega: Option<f64>,
    pub gamma: f64,
    pub tol_residual: f64,
    pub snapshot_rule: SnapshotRule,
}

impl SolverPlan {
    /// Defaults of the synthetic experiments: `k = K` for IHT, CoSaMP and
    /// GraSP, `k = 9K` otherwise; `η = 1` for IHT and the heuristic step
    /// elsewhere; `m = 3n`.
    pub fn standard(solver: SolverKind, stages: usize) -> Self {
        let (k, step) = match solver {
            SolverKind::Iht => (KRule::TimesTrue(1), StepSize::Fixed(1.0)),
            SolverKind::Cosamp | SolverKind::Grasp => (KRule::TimesTrue(1), StepSize::Heuristic),
            _ => (KRule::TimesTrue(9), StepSize::Heuristic),
        };
        Self {
            solver,
            k,
            step,
            stages,
            m: None,
            batch_iters: None,
            omega: None,
            gamma: 0.0,
            tol_residual: 1e-12,
            snapshot_rule: SnapshotRule::UniformJ,
        }
    }

    pub fn update_frequency(&self, n: usize) -> usize {
        self.m.unwrap_or(3 * n).max(1)
    }

    /// `(2m/n + 1)S`, rounded up.
    pub fn fair_batch_iters(&self, n: usize) -> usize {
        self.batch_iters.unwrap_or_else(|| {
            let m = self.update_frequency(n) as f64;
            ((2.0 * m / n as f64 + 1.0) * self.stages as f64).ceil() as usize
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 {
            return invalid("stage budget must be at least 1");
        }
        if matches!(self.k, KRule::Fixed(0) | KRule::TimesTrue(0)) {
            return invalid("projection sparsity must be at least 1");
        }
        if self.m == Some(0) || self.batch_iters == Some(0) {
            return invalid("update frequency and iteration budget must be at least 1");
        }
        if !(self.gamma >= 0.0) {
            return invalid("ridge weight must be nonnegative");
        }
        crate::solvers::check_omega(self.omega)
    }

    /// Runs the planned solver on `problem` with projection sparsity `k`.
    pub fn run(&self, problem: &SensingProblem, k: usize, seed: u64) -> Result<SolverReport> {
        let n = problem.n();
        let batch = || {
            let mut c = SolverConfig::new(k);
            c.step = self.step;
            c.max_iters = self.fair_batch_iters(n);
            c.tol_residual = self.tol_residual;
            c.omega = self.omega;
            c.rng_seed = seed;
            c
        };
        let model = || LinearModel::<SquaredLoss>::new(problem.clone(), self.gamma);
        match self.solver {
            SolverKind::Iht => iht(problem, &batch()),
            SolverKind::Cosamp => cosamp(problem, &batch()),
            SolverKind::Pgd => pgd(&model()?, &batch()),
            SolverKind::Grasp => grasp(&model()?, &batch()),
            SolverKind::HtSvrg => {
                let mut c = SvrgConfig::new(k, self.update_frequency(n));
                c.stages = self.stages;
                c.eta = self.step;
                c.omega = self.omega;
                c.rng_seed = seed;
                c.snapshot_rule = self.snapshot_rule;
                c.tol_residual = self.tol_residual;
                ht_svrg(&model()?, &c)
            }
            SolverKind::HtSaga => {
                let steps = (2 * self.update_frequency(n) + n) * self.stages;
                let mut c = SagaConfig::new(k, steps);
                c.eta = match self.step {
                    StepSize::Fixed(eta) => Some(eta),
                    StepSize::Heuristic => None,
                };
                c.omega = self.omega;
                c.rng_seed = seed;
                c.tol_residual = self.tol_residual;
                ht_saga(&model()?, &c)
            }
        }
    }
}

/// Outcome of one seeded trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub index: usize,
    pub seed: u64,
    /// `None` when the solver diverged.
    pub rel_error: Option<f64>,
    pub success: bool,
    pub diverged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialBatchResult {
    pub config_digest: String,
    pub solver: SolverKind,
    pub n: usize,
    #[serde(rename = "K")]
    pub big_k: usize,
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
    /// Percent.
    pub success_rate: f64,
    /// Mean over trials that did not diverge; `None` if all diverged.
    pub mean_rel_error: Option<f64>,
    pub diverged: usize,
    /// Master seed of the batch.
    pub seed: u64,
    pub per_trial_seeds: Vec<u64>,
}

/// Batch-level parameters of [`run_trials`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub trials: usize,
    pub success_tol: f64,
    pub master_seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl TrialSpec {
    pub fn new(trials: usize, master_seed: u64) -> Self {
        Self {
            trials,
            success_tol: SUCCESS_TOL,
            master_seed,
            execution: Execution::default(),
        }
    }
}

/// Hex SHA-256 prefix of the JSON encoding of `value`.
pub fn config_digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration serializes");
    let hash = Sha256::digest(bytes);
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// One trial: problem from `seed`, solver seeded with `splitmix64(seed)`.
pub fn run_single_trial(plan: &SolverPlan, scenario: &Scenario, index: usize, seed: u64, success_tol: f64) -> Result<TrialOutcome> {
    let problem = generate_sensing_problem(scenario, seed)?;
    let k = plan.k.resolve(scenario.big_k, scenario.d);
    let report = plan.run(&problem, k, splitmix64(seed))?;
    let diverged = report.diverged();
    let rel_error = if diverged { None } else { problem.relative_error(&report.x_final) };
    let rel_error = rel_error.filter(|e| e.is_finite());
    Ok(TrialOutcome {
        index,
        seed,
        success: rel_error.is_some_and(|e| e < success_tol),
        diverged: diverged || rel_error.is_none(),
        rel_error,
        iterations: report.iterations_run,
    })
}

/// Runs seeded trials (possibly concurrently) and aggregates them in index order.
pub fn run_trials(plan: &SolverPlan, scenario: &Scenario, spec: &TrialSpec) -> Result<(TrialBatchResult, Vec<TrialOutcome>)> {
    if spec.trials == 0 {
        return invalid("at least one trial is required");
    }
    if !(spec.success_tol > 0.0) {
        return invalid("success tolerance must be positive");
    }
    plan.validate()?;
    // Validate the scenario once up front so that errors are not per-trial.
    generate_sensing_problem(&Scenario { n: 1, ..*scenario }, 0)?;
    let seeds: Vec<u64> = (0..spec.trials).map(|i| trial_seed(spec.master_seed, i as u64)).collect();
    let outcomes = map_indexed(spec.trials, spec.execution, |i| {
        run_single_trial(plan, scenario, i, seeds[i], spec.success_tol)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((aggregate(plan, scenario, spec, seeds, &outcomes), outcomes))
}

fn aggregate(plan: &SolverPlan, scenario: &Scenario, spec: &TrialSpec, seeds: Vec<u64>, outcomes: &[TrialOutcome]) -> TrialBatchResult {
    let successes = outcomes.iter().filter(|o| o.success).count();
    let finite: Vec<f64> = outcomes.iter().filter_map(|o| o.rel_error).collect();
    let mean_rel_error = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);
    TrialBatchResult {
        config_digest: config_digest(&(plan, scenario, spec)),
        solver: plan.solver,
        n: scenario.n,
        big_k: scenario.big_k,
        k: plan.k.resolve(scenario.big_k, scenario.d),
        trials: outcomes.len(),
        successes,
        success_rate: 100.0 * successes as f64 / outcomes.len() as f64,
        mean_rel_error,
        diverged: outcomes.iter().filter(|o| o.diverged).count(),
        seed: spec.master_seed,
        per_trial_seeds: seeds,
    }
}

/// Success-rate grid over `(n, K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub solver: SolverKind,
    pub d: usize,
    pub n_grid: Vec<usize>,
    pub k_grid: Vec<usize>,
    /// Row-major over `(K, n)`: `cells[ki * n_grid.len() + ni]`.
    pub cells: Vec<TrialBatchResult>,
}

impl PhaseDiagram {
    pub fn cell(&self, ki: usize, ni: usize) -> &TrialBatchResult {
        &self.cells[ki * self.n_grid.len() + ni]
    }

    /// Heatmap matrix: one row per `K`, one column per `n`, entries are success rates.
    pub fn to_csv_matrix(&self) -> String {
        let mut out = String::from("K\\n");
        for n in &self.n_grid {
            out.push_str(&format!(",{n}"));
        }
        out.push('\n');
        for (ki, big_k) in self.k_grid.iter().enumerate() {
            out.push_str(&big_k.to_string());
            for ni in 0..self.n_grid.len() {
                out.push_str(&format!(",{}", self.cell(ki, ni).success_rate));
            }
            out.push('\n');
        }
        out
    }
}

/// Every `(n, K)` cell uses `spec.master_seed` mixed with the cell coordinates.
pub fn sweep_phase_diagram(plan: &SolverPlan, n_grid: &[usize], k_grid: &[usize], d: usize, spec: &TrialSpec) -> Result<PhaseDiagram> {
    if n_grid.is_empty() || k_grid.is_empty() {
        return invalid("phase diagram grids must be nonempty");
    }
    let mut cells = Vec::with_capacity(n_grid.len() * k_grid.len());
    for &big_k in k_grid {
        for &n in n_grid {
            let cell_spec = TrialSpec {
                master_seed: cell_seed(spec.master_seed, n, big_k),
                ..*spec
            };
            cells.push(run_trials(plan, &Scenario::noiseless(n, d, big_k), &cell_spec)?.0);
        }
    }
    Ok(PhaseDiagram {
        solver: plan.solver,
        d,
        n_grid: n_grid.to_vec(),
        k_grid: k_grid.to_vec(),
        cells,
    })
}

/// Seed of a grid cell; depends only on the master seed and `(n, K)`, so
/// different solvers see the same problems.
pub fn cell_seed(master: u64, n: usize, big_k: usize) -> u64 {
    splitmix64(master ^ splitmix64(((n as u64) << 32) | big_k as u64))
}

/// Result of [`min_measurements_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMeasurements {
    #[serde(rename = "K")]
    pub big_k: usize,
    pub target_rate: f64,
    pub n: usize,
    /// `false` when even `n = d` missed the target (`n` is then `d`).
    pub reached: bool,
    /// Every `(n, success rate)` evaluated, in order.
    pub evaluated: Vec<(usize, f64)>,
}

/// Search knobs for [`min_measurements_search`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    /// Coarse grid step used to locate the first `n` with at least 90% success.
    pub coarse_step: usize,
    pub fine_step: usize,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            coarse_step: 16,
            fine_step: 1,
        }
    }
}

/// Smallest `n` (at the fine step) whose success rate reaches `target_rate`
/// while `n − fine_step` does not.
///
/// A coarse scan finds the first grid point `n₀` with ≥90% success; the
/// search then walks from `n₀` downward while the target still holds, or
/// upward until it is met. Each `n` is evaluated once with seeds tied to
/// `(n, K)`.
pub fn min_measurements_search(
    plan: &SolverPlan,
    big_k: usize,
    target_rate: f64,
    d: usize,
    spec: &TrialSpec,
    search: &SearchSpec,
) -> Result<MinMeasurements> {
    if !(target_rate > 0.0 && target_rate <= 100.0) {
        return invalid(format!("target rate must lie in (0, 100], got {target_rate}"));
    }
    if search.coarse_step == 0 || search.fine_step == 0 {
        return invalid("search steps must be positive");
    }
    let mut evaluated: Vec<(usize, f64)> = Vec::new();
    let mut rate_at = |n: usize| -> Result<f64> {
        if let Some(&(_, r)) = evaluated.iter().find(|(m, _)| *m == n) {
            return Ok(r);
        }
        let cell_spec = TrialSpec {
            master_seed: cell_seed(spec.master_seed, n, big_k),
            ..*spec
        };
        let r = run_trials(plan, &Scenario::noiseless(n, d, big_k), &cell_spec)?.0.success_rate;
        evaluated.push((n, r));
        Ok(r)
    };
    let mut n0 = None;
    let mut n = search.coarse_step.min(d);
    loop {
        if rate_at(n)? >= 90.0 {
            n0 = Some(n);
            break;
        }
        if n == d {
            break;
        }
        n = (n + search.coarse_step).min(d);
    }
    let Some(mut n) = n0 else {
        let found = rate_at(d)? >= target_rate;
        return Ok(finish(big_k, target_rate, d, found, evaluated));
    };
    if rate_at(n)? >= target_rate {
        while n > search.fine_step && rate_at(n - search.fine_step)? >= target_rate {
            n -= search.fine_step;
        }
        Ok(finish(big_k, target_rate, n, true, evaluated))
    } else {
        loop {
            if n >= d {
                let ok = rate_at(d)? >= target_rate;
                return Ok(finish(big_k, target_rate, d, ok, evaluated));
            }
            n = (n + search.fine_step).min(d);
            if rate_at(n)? >= target_rate {
                return Ok(finish(big_k, target_rate, n, true, evaluated));
            }
        }
    }
}

fn finish(big_k: usize, target_rate: f64, n: usize, reached: bool, evaluated: Vec<(usize, f64)>) -> MinMeasurements {
    MinMeasurements {
        big_k,
        target_rate,
        n,
        reached,
        evaluated,
    }
}

/// Least-squares line `y ≈ slope·x + intercept` with its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_linear(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return invalid("a line fit needs at least two points");
    }
    let len = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / len;
    let my = points.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("a line fit needs at least two distinct abscissae");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

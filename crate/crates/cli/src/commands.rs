use std::path::{Path, PathBuf};

use hardthresh::analysis::{min_update_frequency, optimal_nu, svrg_coefficients, SvrgParams};
use hardthresh::harness::{
    classify_experiment, fit_linear, load_mnist_idx, min_measurements_search, pairwise_task, run_trials,
    sweep_phase_diagram, write_results, ClassifyConfig, KRule, MinMeasurements, Scenario, SearchSpec, SolverPlan,
    TrialSpec,
};
use hardthresh::solvers::{SolverKind, StepSize};
use hardthresh::thresholding::deviation_bound;
use hardthresh::Execution;
use serde::Serialize;
use serde_json::json;

use crate::args::{BoundArgs, ClassifyArgs, Common, ConvergenceArgs, MinMeasurementsArgs, RecoverArgs, SweepArgs};
use crate::config::RunManifest;
use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "HARDTHRESH_OUT_DIR";

pub fn bound(a: &BoundArgs) -> Result<(), CliError> {
    let b = deviation_bound(a.k, a.big_k, a.d, a.s)?;
    println!("k = {}, K = {}, d = {}{}", b.k, b.big_k, b.d, a.s.map(|s| format!(", s = {s}")).unwrap_or_default());
    println!("rho          = {:.6}", b.rho);
    println!("nu           = {:.6}", b.nu);
    println!("sqrt(nu)     = {:.6}", b.sqrt_nu);
    println!("legacy       = {:.6}", b.legacy_factor);
    println!("jain         = {:.6}", b.jain_factor);
    Ok(())
}

fn execution(common: &Common) -> Result<Execution, CliError> {
    match common.jobs {
        Some(0) => Err(CliError::usage("--jobs must be at least 1")),
        Some(1) => Ok(Execution::Sequential),
        Some(_jobs) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(_jobs)
                .build_global()
                .map_err(|e| CliError::usage(format!("cannot size the thread pool: {e}")))?;
            Ok(Execution::Parallel)
        }
        None => Ok(Execution::Parallel),
    }
}

fn output_path(common: &Common, command: &str) -> Result<PathBuf, CliError> {
    let path = match &common.out {
        Some(p) => p.clone(),
        None => {
            let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
            dir.join(format!("{command}.{}", common.format.extension()))
        }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    Ok(path)
}

fn finish(command: &str, params: &impl Serialize, common: &Common, out: &Path) -> Result<(), CliError> {
    let manifest = RunManifest::new(command, params, common.seed).write(out)?;
    println!("results  {}", out.display());
    println!("manifest {}", manifest.display());
    Ok(())
}

fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<(), CliError> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => CliError::io(path, e),
        other => CliError::usage(format!("csv encoding failed: {other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_json(value: &serde_json::Value, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("results serialize");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn plan(solver: SolverKind, stages: usize, k: Option<KRule>, m: Option<usize>, eta: Option<f64>) -> SolverPlan {
    let mut plan = SolverPlan::standard(solver, stages);
    if let Some(k) = k {
        plan.k = k;
    }
    plan.m = m;
    if let Some(eta) = eta {
        plan.step = StepSize::Fixed(eta);
    }
    plan
}

pub fn recover(a: &RecoverArgs) -> Result<(), CliError> {
    let mut p = plan(a.solver, a.stages, a.k.map(KRule::Fixed), a.m, a.eta);
    p.omega = a.omega;
    p.gamma = a.gamma;
    let scenario = Scenario {
        n: a.n,
        d: a.d,
        big_k: a.big_k,
        noise_sigma: a.noise,
        design: a.design.into(),
    };
    let mut spec = TrialSpec::new(a.trials, a.common.seed);
    spec.success_tol = a.success_tol;
    spec.execution = execution(&a.common)?;
    let out = output_path(&a.common, "recover")?;
    let (result, _) = run_trials(&p, &scenario, &spec)?;
    println!(
        "{} n={} d={} K={} k={}: success_rate = {} ({}/{}), diverged = {}, mean_rel_error = {}",
        result.solver,
        result.n,
        a.d,
        result.big_k,
        result.k,
        result.success_rate,
        result.successes,
        result.trials,
        result.diverged,
        result.mean_rel_error.map_or("n/a".into(), |e| format!("{e:.3e}"))
    );
    write_results(std::slice::from_ref(&result), &out, a.common.format.into())?;
    finish("recover", a, &a.common, &out)
}

fn grid(lo: usize, hi: usize, step: usize, what: &str) -> Result<Vec<usize>, CliError> {
    if step == 0 || lo == 0 || lo > hi {
        return Err(CliError::usage(format!("invalid {what} grid {lo}..={hi} step {step}")));
    }
    Ok((lo..=hi).step_by(step).collect())
}

pub fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let ns = grid(a.n_min, a.n_max.unwrap_or(a.d), a.n_step, "n")?;
    let ks = grid(a.k_min, a.k_max, a.k_step, "K")?;
    let p = plan(a.solver, a.stages, a.k_factor.map(KRule::TimesTrue), None, a.eta);
    p.validate()?;
    let mut spec = TrialSpec::new(a.trials, a.common.seed);
    spec.execution = execution(&a.common)?;
    if spec.trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    let out = output_path(&a.common, "sweep")?;
    let pd = sweep_phase_diagram(&p, &ns, &ks, a.d, &spec)?;
    println!("{} success rate (%), rows K, columns n", a.solver);
    print!("{}", pd.to_csv_matrix());
    write_results(&pd.cells, &out, a.common.format.into())?;
    finish("sweep", a, &a.common, &out)
}

#[derive(Serialize)]
struct MinRow {
    #[serde(rename = "K")]
    big_k: usize,
    n: usize,
    reached: bool,
    target_rate: f64,
    evaluations: usize,
}

pub fn min_measurements(a: &MinMeasurementsArgs) -> Result<(), CliError> {
    if a.big_k.is_empty() {
        return Err(CliError::usage("--K needs at least one value"));
    }
    let p = plan(a.solver, a.stages, None, None, None);
    let mut spec = TrialSpec::new(a.trials, a.common.seed);
    spec.execution = execution(&a.common)?;
    let search = SearchSpec {
        coarse_step: a.coarse_step,
        ..SearchSpec::default()
    };
    let out = output_path(&a.common, "min-measurements")?;
    let mut found: Vec<MinMeasurements> = Vec::new();
    for &big_k in &a.big_k {
        let r = min_measurements_search(&p, big_k, a.target, a.d, &spec, &search)?;
        println!("K = {:>3}  n = {:>4}{}", big_k, r.n, if r.reached { "" } else { "  (target not reached)" });
        found.push(r);
    }
    let points: Vec<(f64, f64)> = found.iter().map(|r| (r.big_k as f64, r.n as f64)).collect();
    let fit = if points.len() >= 2 { Some(fit_linear(&points)?) } else { None };
    if let Some(f) = &fit {
        println!("n ≈ {:.3}·K + {:.3}  (R² = {:.4})", f.slope, f.intercept, f.r_squared);
    }
    match a.common.format {
        crate::args::FormatArg::Csv => {
            let rows: Vec<MinRow> = found
                .iter()
                .map(|r| MinRow {
                    big_k: r.big_k,
                    n: r.n,
                    reached: r.reached,
                    target_rate: r.target_rate,
                    evaluations: r.evaluated.len(),
                })
                .collect();
            write_csv(&rows, &out)?;
        }
        crate::args::FormatArg::Json => write_json(&json!({ "results": found, "fit": fit }), &out)?,
    }
    finish("min-measurements", a, &a.common, &out)
}

fn parse_task(s: &str) -> Result<(u8, u8), CliError> {
    let bad = || CliError::usage(format!("task `{s}` is not of the form a-b with digits 0..=9"));
    let (x, y) = s.split_once('-').ok_or_else(bad)?;
    let digit = |t: &str| t.trim().parse::<u8>().ok().filter(|d| *d <= 9).ok_or_else(bad);
    Ok((digit(x)?, digit(y)?))
}

#[derive(Serialize)]
struct ClassRow {
    task: String,
    k: usize,
    train_accuracy: f64,
    test_accuracy: Option<f64>,
    final_objective: f64,
}

pub fn classify(a: &ClassifyArgs) -> Result<(), CliError> {
    let tasks = a.tasks.iter().map(|t| parse_task(t)).collect::<Result<Vec<_>, _>>()?;
    let files = |img: &str, lab: &str| load_mnist_idx(&a.mnist_dir.join(img), &a.mnist_dir.join(lab));
    let train = files("train-images-idx3-ubyte", "train-labels-idx1-ubyte").map_err(CliError::input)?;
    let test = files("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte").map_err(CliError::input)?;
    execution(&a.common)?;
    let cfg = ClassifyConfig {
        stages: a.stages,
        m: a.m,
        gamma: a.gamma,
        eta: a.eta.map_or(StepSize::Heuristic, StepSize::Fixed),
        omega: a.omega,
        seed: a.common.seed,
    };
    let out = output_path(&a.common, "classify")?;
    let mut rows = Vec::new();
    let mut full = Vec::new();
    for (x, y) in tasks {
        let name = format!("{x}-{y}");
        let r = classify_experiment(&pairwise_task(&train, x, y)?, Some(&pairwise_task(&test, x, y)?), &a.k_list, &cfg)?;
        for o in &r.outcomes {
            println!(
                "{name}  k = {:>3}  train {:.4}  test {:.4}",
                o.k,
                o.train_accuracy,
                o.test_accuracy.unwrap_or(f64::NAN)
            );
            rows.push(ClassRow {
                task: name.clone(),
                k: o.k,
                train_accuracy: o.train_accuracy,
                test_accuracy: o.test_accuracy,
                final_objective: o.objective_trace.last().copied().unwrap_or(f64::NAN),
            });
        }
        full.push(json!({ "task": name, "result": r }));
    }
    match a.common.format {
        crate::args::FormatArg::Csv => write_csv(&rows, &out)?,
        crate::args::FormatArg::Json => write_json(&json!({ "tasks": full }), &out)?,
    }
    finish("classify", a, &a.common, &out)
}

pub fn convergence(a: &ConvergenceArgs) -> Result<(), CliError> {
    let l = a.l;
    let alpha = match (a.alpha, a.c) {
        (Some(alpha), _) => alpha,
        (None, Some(c)) if c > 0.0 => l / c,
        _ => return Err(CliError::usage("give --alpha or a positive --c")),
    };
    let c = l / alpha;
    let eta = match (a.eta, a.eta_frac) {
        (Some(eta), _) => eta,
        (None, Some(f)) => f / l,
        (None, None) if a.corollary1 => 0.2 / l,
        _ => return Err(CliError::usage("give --eta or --eta-frac")),
    };
    let (nu, m, t) = if a.corollary1 {
        (5.0 * c / (5.0 * c - 1.0), 12.5 * (5.0 * c - 1.0), 0.0)
    } else {
        let nu = a.nu.ok_or_else(|| CliError::usage("give --nu (or --corollary1)"))?;
        let m = a.m.ok_or_else(|| CliError::usage("give --m (or --corollary1)"))?;
        (nu, m, a.t)
    };
    let r = svrg_coefficients(&SvrgParams {
        eta,
        alpha,
        l,
        m,
        nu,
        omega: a.omega,
        t,
    })?;
    println!("eta = {eta}, alpha = {alpha}, L = {l}, c = {c}, m = {m}, nu = {nu}, T = {t}");
    println!("regime   = {:?}", r.regime);
    println!("beta     = {}", r.beta);
    println!("tau      = {}", r.tau);
    println!("kappa    = {}", r.kappa);
    println!("feasible = {}", r.feasible);
    if let Ok(o) = optimal_nu(eta, alpha) {
        println!("optimal nu = {} (k/K ≈ {:.3})", o.nu, o.k_over_big_k);
    }
    if let Ok(u) = min_update_frequency(eta, alpha, l, nu) {
        if u.overflow {
            println!("minimal m: beyond u64 (bound {:.3e})", u.bound);
        } else {
            println!("minimal m = {}", u.m);
        }
    }
    Ok(())
}

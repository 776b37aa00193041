//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero when a result disagrees with the expectation below.
//!
//! `KNOWN_FAILURES` lists checks that fail with the current implementation;
//! a listed check that starts passing is also reported, so the list cannot
//! go stale silently.

use std::path::PathBuf;
use std::time::Instant;

use hardthresh::analysis::{rip_threshold_cosamp, rip_threshold_iht, svrg_coefficients, Regime, SvrgParams};
use hardthresh::harness::{
    classify_experiment, fit_linear, generate_sensing_problem, load_mnist_idx, min_measurements_search, pairwise_task,
    run_trials, sweep_phase_diagram, ClassifyConfig, KRule, PhaseDiagram, Scenario, SearchSpec, SolverPlan, TrialSpec,
    DIGIT_PAIRS,
};
use hardthresh::objectives::{estimate_restricted_curvature, CurvatureProbe};
use hardthresh::solvers::{ht_svrg, pgd, SolverConfig, SolverKind, StepSize, SvrgConfig};
use hardthresh::thresholding::{best_sparse_partner, deviation_bound, deviation_ratio, tightness_witness, NU_MAX};
use hardthresh::{ObjectiveModel, RegularizedLeastSquares, RegularizedLogistic, SensingProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const KNOWN_FAILURES: &[&str] = &["4b"];

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Check {
    id: &'static str,
    status: Status,
    detail: String,
}

fn check(id: &'static str, pass: bool, detail: String) -> Check {
    Check {
        id,
        status: if pass { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn tight_bound() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_witness = 0.0f64;
    let mut witnesses = 0;
    for _ in 0..1000 {
        let d = rng.gen_range(1..=12);
        let k = rng.gen_range(1..=d);
        let big_k = rng.gen_range(1..=k);
        let nu = deviation_bound(k, big_k, d, None).unwrap().nu;
        for _ in 0..10_000 {
            let b: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let mut a = vec![0.0; d];
            for i in rand::seq::index::sample(&mut rng, d, big_k) {
                a[i] = 2.0 * rng.sample::<f64, _>(StandardNormal);
            }
            if let Some(r) = deviation_ratio(&b, &a, k) {
                worst_excess = worst_excess.max(r / nu - 1.0);
            }
        }
        for _ in 0..100 {
            let b: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            if let Some((r, _)) = best_sparse_partner(&b, k, big_k) {
                worst_excess = worst_excess.max(r / nu - 1.0);
            }
        }
        if big_k < d - k {
            let (b, a) = tightness_witness(k, big_k, d).unwrap();
            let r = deviation_ratio(b.as_slice(), a.as_slice(), k).unwrap();
            worst_witness = worst_witness.max(((r - nu) / nu).abs());
            witnesses += 1;
        }
    }
    vec![
        check(
            "1a",
            worst_excess <= 1e-8,
            format!("max observed ratio/ν − 1 = {worst_excess:.3e} over 10⁷ random pairs (limit 1e-8)"),
        ),
        check(
            "1b",
            worst_witness <= 1e-10,
            format!("witness relative error ≤ {worst_witness:.3e} on {witnesses} configurations (limit 1e-10)"),
        ),
    ]
}

fn closed_forms() -> Vec<Check> {
    let sqrt_nu = deviation_bound(5, 5, 100, None).unwrap().sqrt_nu;
    let iht_max = rip_threshold_iht(NU_MAX).unwrap().value;
    let iht_low = rip_threshold_iht(1.25).unwrap().value;
    let cosamp = rip_threshold_cosamp(NU_MAX).unwrap().value;
    let legacy = rip_threshold_iht(4.0).unwrap().value;
    let pass = (sqrt_nu - 1.619).abs() <= 1e-3
        && (iht_max - 0.22).abs() <= 5e-3
        && (iht_low - 0.32).abs() <= 5e-3
        && (cosamp - 0.31).abs() <= 5e-3
        && (legacy - 0.18).abs() <= 5e-3;
    vec![check(
        "2",
        pass,
        format!("√ν = {sqrt_nu:.4}, IHT {iht_max:.4}/{iht_low:.4}, CoSaMP {cosamp:.4}, legacy {legacy:.4}"),
    )]
}

fn rate_identity() -> Vec<Check> {
    let mut worst = 0.0f64;
    for c in [1.0, 1.5, 2.0, 5.0, 10.0, 50.0] {
        let l = 1.0;
        let r = svrg_coefficients(&SvrgParams {
            eta: 1.0 / (5.0 * l),
            alpha: l / c,
            l,
            m: 12.5 * (5.0 * c - 1.0),
            nu: 5.0 * c / (5.0 * c - 1.0),
            omega: 1.0,
            t: 0.0,
        })
        .unwrap();
        worst = worst.max((r.beta - 0.8).abs());
    }
    vec![check("3", worst <= 1e-12, format!("max |β − 0.8| = {worst:.2e} over six condition numbers"))]
}

fn standard_plan(solver: SolverKind, k: usize) -> SolverPlan {
    let mut plan = SolverPlan::standard(solver, 10_000);
    plan.k = KRule::Fixed(k);
    plan.m = Some(300);
    plan
}

fn standard_recovery() -> Vec<Check> {
    let scenario = Scenario::noiseless(100, 256, 4);
    let spec = TrialSpec::new(100, 7);
    let svrg = run_trials(&standard_plan(SolverKind::HtSvrg, 36), &scenario, &spec).unwrap().0;
    let mut pgd_plan = standard_plan(SolverKind::Pgd, 36);
    pgd_plan.stages = 400;
    let pgd = run_trials(&pgd_plan, &scenario, &spec).unwrap().0;
    let small: Vec<(usize, f64)> = [4, 10]
        .into_iter()
        .map(|k| (k, run_trials(&standard_plan(SolverKind::HtSvrg, k), &scenario, &spec).unwrap().0.success_rate))
        .collect();
    let worst_small = small.iter().map(|p| p.1).fold(0.0, f64::max);
    vec![
        check(
            "4a",
            svrg.success_rate >= 95.0 && pgd.success_rate >= 95.0,
            format!("k = 36: HT-SVRG {}%, PGD {}% (need ≥ 95%)", svrg.success_rate, pgd.success_rate),
        ),
        check(
            "4b",
            worst_small < 5.0,
            format!("HT-SVRG success at (k, rate%) = {small:?} (need < 5% for k ≤ 10)"),
        ),
    ]
}

fn divergence() -> Vec<Check> {
    let mut plan = standard_plan(SolverKind::HtSvrg, 36);
    plan.step = StepSize::Fixed(3.0);
    let r = run_trials(&plan, &Scenario::noiseless(100, 256, 4), &TrialSpec::new(20, 7)).unwrap().0;
    vec![check(
        "5",
        r.diverged * 10 >= 9 * r.trials,
        format!("η = 3 diverged in {}/{} trials (need ≥ 90%)", r.diverged, r.trials),
    )]
}

fn phase_diagrams() -> Vec<Check> {
    let ns: Vec<usize> = (1..=16).map(|i| 16 * i).collect();
    let ks: Vec<usize> = (0..7).map(|i| 1 + 4 * i).collect();
    let spec = TrialSpec::new(50, 11);
    let sweep = |s| sweep_phase_diagram(&SolverPlan::standard(s, 400), &ns, &ks, 256, &spec).unwrap();
    let iht = sweep(SolverKind::Iht);
    let pgd = sweep(SolverKind::Pgd);
    let ordered = iht
        .cells
        .iter()
        .zip(&pgd.cells)
        .filter(|(a, b)| b.success_rate >= a.success_rate - 5.0)
        .count();
    let drops = |pd: &PhaseDiagram| {
        let mut bad = Vec::new();
        for ki in 0..ks.len() {
            for ni in 1..ns.len() {
                if pd.cell(ki, ni).success_rate < pd.cell(ki, ni - 1).success_rate - 5.0 {
                    bad.push((ks[ki], ns[ni]));
                }
            }
        }
        bad
    };
    let (di, dp) = (drops(&iht), drops(&pgd));
    let total = iht.cells.len();
    vec![
        check(
            "6a",
            ordered * 10 >= 9 * total,
            format!("PGD ≥ IHT − 5 on {ordered}/{total} cells (need ≥ 90%)"),
        ),
        check(
            "6b",
            di.is_empty() && dp.is_empty(),
            format!("drops > 5 points along n: IHT {di:?}, PGD {dp:?}"),
        ),
    ]
}

fn min_measurements() -> Vec<Check> {
    let plan = SolverPlan::standard(SolverKind::Pgd, 400);
    let spec = TrialSpec::new(50, 3);
    let mut points = Vec::new();
    let mut reached = true;
    for big_k in [2, 6, 10, 14, 18] {
        let r = min_measurements_search(&plan, big_k, 95.0, 256, &spec, &SearchSpec::default()).unwrap();
        reached &= r.reached;
        points.push((big_k as f64, r.n as f64));
    }
    let fit = fit_linear(&points).unwrap();
    let ns: Vec<f64> = points.iter().map(|p| p.1).collect();
    vec![check(
        "7",
        reached && fit.r_squared >= 0.9,
        format!("PGD n(K) = {ns:?}, slope {:.2}, R² = {:.4} (need ≥ 0.9)", fit.slope, fit.r_squared),
    )]
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn properties() -> Vec<Check> {
    let p = generate_sensing_problem(&Scenario::noiseless(15, 10, 3), 1).unwrap();
    let labels = p.measurements().iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
    let logistic = RegularizedLogistic::new(SensingProblem::new(p.design().clone(), labels).unwrap(), 0.3).unwrap();
    let ls = RegularizedLeastSquares::new(p.clone(), 0.3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut fd_err = 0.0f64;
    for model in [&ls as &dyn ObjectiveModel, &logistic] {
        for _ in 0..50 {
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut g = vec![0.0; 10];
            model.full_gradient(&x, &mut g);
            let scale = g.iter().map(|v| v.abs()).fold(1.0, f64::max);
            for j in 0..10 {
                let h = 1e-6 * (1.0 + x[j].abs());
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[j] += h;
                xm[j] -= h;
                let fd = (model.value(&xp) - model.value(&xm)) / (2.0 * h);
                fd_err = fd_err.max((fd - g[j]).abs() / scale);
            }
        }
    }

    // At the snapshot the corrected direction equals the full gradient.
    let snap: Vec<f64> = (0..10).map(|j| (j as f64).sin()).collect();
    let mut mu = vec![0.0; 10];
    ls.full_gradient(&snap, &mut mu);
    let mut vr_err = 0.0f64;
    for i in 0..15 {
        let mut dir = mu.clone();
        ls.add_sample_gradient_difference(i, &snap, &snap, 1.0, &mut dir);
        vr_err = vr_err.max(max_abs_diff(&dir, &mu));
    }

    // Per-step feasibility runs as debug assertions inside each solver; the
    // final iterates are checked here as well.
    let big = generate_sensing_problem(&Scenario::noiseless(40, 64, 3), 6).unwrap();
    let model = RegularizedLeastSquares::new(big, 0.0).unwrap();
    let mut feasible = true;
    let mut deterministic = true;
    for seed in 0..10 {
        let mut s = SvrgConfig::new(9, 60);
        s.stages = 20;
        s.rng_seed = seed;
        s.omega = Some(0.5 + seed as f64 * 0.2);
        let a = ht_svrg(&model, &s).unwrap();
        deterministic &= a == ht_svrg(&model, &s).unwrap();
        let mut c = SolverConfig::new(9);
        c.step = StepSize::Heuristic;
        c.omega = s.omega;
        let b = pgd(&model, &c).unwrap();
        for x in [&a.x_final, &b.x_final] {
            feasible &= x.iter().filter(|v| **v != 0.0).count() <= 9;
            feasible &= x.iter().map(|v| v * v).sum::<f64>().sqrt() <= s.omega.unwrap() * (1.0 + 1e-12);
        }
    }

    let mut jump = 0.0f64;
    for (eta, alpha, l, m) in [(0.05, 0.5, 1.0, 400.0), (0.01, 0.2, 2.0, 5000.0), (0.2, 0.9, 1.2, 50.0)] {
        let edge = 1.0 / (1.0 - eta * alpha);
        let at = |nu: f64| svrg_coefficients(&SvrgParams { eta, alpha, l, m, nu, omega: 2.0, t: 0.1 }).unwrap();
        let (lo, hi) = (at(edge), at(edge * (1.0 + 1e-14)));
        assert_eq!((lo.regime, hi.regime), (Regime::Case2, Regime::Case1));
        jump = jump.max((lo.beta - hi.beta).abs() / lo.beta);
    }
    vec![check(
        "8",
        fd_err <= 1e-5 && vr_err == 0.0 && feasible && deterministic && jump <= 1e-9,
        format!(
            "FD gradient error {fd_err:.1e}, snapshot identity error {vr_err:.1e}, feasible {feasible}, \
             deterministic {deterministic}, regime jump {jump:.1e}"
        ),
    )]
}

fn mnist() -> Vec<Check> {
    let Some(dir) = std::env::var_os("MNIST_DIR").map(PathBuf::from) else {
        return vec![Check {
            id: "9",
            status: Status::Skip,
            detail: "MNIST_DIR is not set; point it at a directory holding the four IDX files".into(),
        }];
    };
    let load = |img: &str, lab: &str| load_mnist_idx(&dir.join(img), &dir.join(lab));
    let (train, test) = match (
        load("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        load("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return vec![check("9", false, format!("could not load MNIST: {e}"))],
    };
    let cfg = ClassifyConfig::default();
    let mut small_gap = 0;
    let mut plateaued = 0;
    let mut summary = Vec::new();
    for (a, b) in DIGIT_PAIRS {
        let tr = pairwise_task(&train, a, b).unwrap();
        let te = pairwise_task(&test, a, b).unwrap();
        let r = classify_experiment(&tr, Some(&te), &[70, 784], &cfg).unwrap();
        let acc = |i: usize| r.outcomes[i].test_accuracy.unwrap();
        let gap = acc(1) - acc(0);
        small_gap += usize::from(gap <= 0.02);
        // Plateau: the last five stages account for under 1% of the total decrease.
        let flat = r.outcomes.iter().all(|o| {
            let t = &o.objective_trace;
            let total = t[0] - t[t.len() - 1];
            t.len() > 5 && (t[t.len() - 6] - t[t.len() - 1]).abs() <= 0.01 * total.abs().max(1e-12)
        });
        plateaued += usize::from(flat);
        summary.push(format!("{a}v{b}: {:.3}/{:.3}", acc(0), acc(1)));
    }
    vec![check(
        "9",
        small_gap >= 4 && plateaued == DIGIT_PAIRS.len(),
        format!("k=70/k=784 test accuracy {}; gap ≤ 2% on {small_gap}/5, plateau on {plateaued}/5", summary.join(", ")),
    )]
}

fn condition_numbers() -> Vec<Check> {
    let (d, big_k, k) = (2048usize, 4usize, 4usize);
    let r = 3 * k + big_k;
    let n = (8.0 * r as f64 * (std::f64::consts::E * d as f64 / r as f64).ln()).ceil() as usize;
    let seeds = 100;
    let mut good = 0;
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let p = generate_sensing_problem(&Scenario::noiseless(n, d, big_k), seed).unwrap();
        let model = RegularizedLeastSquares::new(p, 0.0).unwrap();
        let c = estimate_restricted_curvature(&model, &CurvatureProbe::new(r, seed)).unwrap().condition_number();
        worst = worst.max(c);
        good += usize::from(c <= 3.0);
    }
    vec![check(
        "10",
        good * 100 >= 95 * seeds as usize,
        format!("n = {n}, d = {d}, r = {r}: condition ≤ 3 in {good}/{seeds} designs (worst {worst:.3})"),
    )]
}

type Criterion = (&'static str, fn() -> Vec<Check>);

fn main() {
    let criteria: [Criterion; 10] = [
        ("tight bound", tight_bound),
        ("closed forms", closed_forms),
        ("rate identity", rate_identity),
        ("standard recovery", standard_recovery),
        ("divergence", divergence),
        ("phase diagrams", phase_diagrams),
        ("min measurements", min_measurements),
        ("properties", properties),
        ("mnist", mnist),
        ("condition numbers", condition_numbers),
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut unexpected = Vec::new();
    for (name, run) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let checks = run();
        let secs = start.elapsed().as_secs_f64();
        for c in checks {
            let known = KNOWN_FAILURES.contains(&c.id);
            let label = match (&c.status, known) {
                (Status::Pass, false) => "PASS",
                (Status::Pass, true) => {
                    unexpected.push(c.id);
                    "PASS (listed as known failure)"
                }
                (Status::Fail, true) => "FAIL (known)",
                (Status::Fail, false) => {
                    unexpected.push(c.id);
                    "FAIL"
                }
                (Status::Skip, _) => "SKIP",
            };
            println!("criterion {:<3} {name:<19} {label:<14} {:>7.1}s  {}", c.id, secs, c.detail);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected acceptance results: {unexpected:?}");
        std::process::exit(1);
    }
}

use std::io::Write;

use hardthresh::harness::{
    cell_seed, classify_experiment, fit_linear, generate_sensing_problem, load_mnist_idx, min_measurements_search,
    pairwise_task, read_json_results, read_results, run_single_trial, run_trials, sweep_phase_diagram, write_results,
    ClassifyConfig, Design, KRule, ResultFormat, Scenario, SearchSpec, SolverPlan, TrialSpec, CSV_HEADER, DIGIT_PAIRS,
};
use hardthresh::solvers::{iht, SolverConfig, SolverKind};
use hardthresh::{Error, Execution, IdxError, SensingProblem};
use nalgebra::DMatrix;

#[test]
fn design_variance_is_one_over_n() {
    let n = 250;
    let p = generate_sensing_problem(&Scenario::noiseless(n, 400, 5), 8).unwrap();
    let entries = p.design().as_slice();
    let count = entries.len() as f64;
    let mean = entries.iter().sum::<f64>() / count;
    let var = entries.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
    // Sample variance of N(0, σ²) has standard deviation σ²·√(2/(N−1)).
    let sigma2 = 1.0 / n as f64;
    let band = 3.0 * sigma2 * (2.0 / (count - 1.0)).sqrt();
    assert!((var - sigma2).abs() <= band, "variance {var}, expected {sigma2} ± {band}");
    assert!((var - sigma2).abs() <= 0.05 * sigma2);
}

#[test]
fn generation_contract() {
    let s = Scenario::noiseless(30, 50, 7);
    let p = generate_sensing_problem(&s, 1).unwrap();
    assert_eq!(p.x_true().unwrap().iter().filter(|v| **v != 0.0).count(), 7);
    assert_eq!(p.residual_norm(p.x_true().unwrap()), 0.0);
    let q = generate_sensing_problem(&s, 1).unwrap();
    assert_eq!(p.design(), q.design());
    assert_eq!(p.measurements(), q.measurements());
    assert!(matches!(
        generate_sensing_problem(&Scenario::noiseless(30, 5, 7), 1),
        Err(Error::InvalidArgument(_))
    ));
    let r = generate_sensing_problem(&Scenario { design: Design::Rademacher, ..s }, 2).unwrap();
    assert!(r.design().iter().all(|v| (v.abs() - 1.0 / 30f64.sqrt()).abs() < 1e-15));
    let noisy = generate_sensing_problem(&Scenario { noise_sigma: 0.1, ..s }, 3).unwrap();
    assert!(noisy.residual_norm(noisy.x_true().unwrap()) > 0.0);
}

#[test]
fn orthonormal_design_one_step() {
    for seed in 0..20 {
        let g = generate_sensing_problem(&Scenario::noiseless(32, 32, 3), seed).unwrap();
        let q = g.design().clone().qr().q();
        let x = g.x_true().unwrap().to_vec();
        let mut y = vec![0.0; 32];
        hardthresh::linalg::mul_sparse(&q, &x, &mut y);
        let p = SensingProblem::new(q, y).unwrap().with_truth(x, 0.0).unwrap();
        let r = iht(&p, &SolverConfig::new(3)).unwrap();
        assert!(p.relative_error(&r.x_final).unwrap() < 1e-12);
    }
}

#[test]
fn hopeless_and_trivial_cells() {
    let spec = TrialSpec::new(10, 4);
    for solver in SolverKind::ALL {
        let plan = SolverPlan::standard(solver, 40);
        let (r, _) = run_trials(&plan, &Scenario::noiseless(1, 256, 4), &spec).unwrap();
        assert_eq!(r.successes, 0, "{solver} at n = 1");
        let (r, _) = run_trials(&plan, &Scenario::noiseless(8, 256, 26), &spec).unwrap();
        assert_eq!(r.successes, 0, "{solver} at n = 8, K = 26");
    }
    for solver in [SolverKind::Iht, SolverKind::Pgd, SolverKind::Cosamp, SolverKind::Grasp] {
        let plan = SolverPlan::standard(solver, 40);
        let (r, _) = run_trials(&plan, &Scenario::noiseless(256, 256, 1), &spec).unwrap();
        assert_eq!(r.success_rate, 100.0, "{solver} at n = d");
    }
}

#[test]
fn stochastic_solvers_on_determined_cell() {
    let spec = TrialSpec::new(5, 4);
    for solver in [SolverKind::HtSvrg, SolverKind::HtSaga] {
        let plan = SolverPlan::standard(solver, 2000);
        let (r, _) = run_trials(&plan, &Scenario::noiseless(256, 256, 1), &spec).unwrap();
        assert_eq!(r.success_rate, 100.0, "{solver}");
    }
}

#[test]
fn trials_are_isolated_and_order_independent() {
    let plan = SolverPlan::standard(SolverKind::HtSvrg, 200);
    let scenario = Scenario::noiseless(60, 128, 4);
    let mut spec = TrialSpec::new(8, 21);
    spec.execution = Execution::Sequential;
    let (a, oa) = run_trials(&plan, &scenario, &spec).unwrap();
    spec.execution = Execution::Parallel;
    let (b, ob) = run_trials(&plan, &scenario, &spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(oa, ob);
    let lone = run_single_trial(&plan, &scenario, 5, a.per_trial_seeds[5], spec.success_tol).unwrap();
    assert_eq!(lone, oa[5]);
    assert!(a.successes <= a.trials);
    assert_eq!(a.success_rate, 100.0 * a.successes as f64 / a.trials as f64);
}

#[test]
fn invalid_batches_are_rejected() {
    let plan = SolverPlan::standard(SolverKind::Iht, 10);
    assert!(run_trials(&plan, &Scenario::noiseless(10, 20, 2), &TrialSpec::new(0, 1)).is_err());
    let mut bad = plan.clone();
    bad.k = KRule::Fixed(0);
    assert!(run_trials(&bad, &Scenario::noiseless(10, 20, 2), &TrialSpec::new(1, 1)).is_err());
}

#[test]
fn phase_diagram_shape_and_monotone_in_n() {
    let plan = SolverPlan::standard(SolverKind::Iht, 100);
    let ns = [16, 32, 48, 64, 80, 96, 112, 128];
    let ks = [2, 6, 10];
    let pd = sweep_phase_diagram(&plan, &ns, &ks, 128, &TrialSpec::new(20, 5)).unwrap();
    assert_eq!(pd.cells.len(), 24);
    for ki in 0..ks.len() {
        for ni in 1..ns.len() {
            assert!(pd.cell(ki, ni).success_rate + 10.0 >= pd.cell(ki, ni - 1).success_rate);
        }
    }
    let csv = pd.to_csv_matrix();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("K\\n,16,32"));
    assert!(sweep_phase_diagram(&plan, &[], &ks, 128, &TrialSpec::new(2, 5)).is_err());
}

#[test]
fn min_measurements_postcondition() {
    let plan = SolverPlan::standard(SolverKind::Iht, 100);
    let spec = TrialSpec::new(20, 9);
    let search = SearchSpec { coarse_step: 8, fine_step: 1 };
    let r = min_measurements_search(&plan, 2, 95.0, 64, &spec, &search).unwrap();
    assert!(r.reached);
    let rate = |n: usize| r.evaluated.iter().find(|(m, _)| *m == n).map(|p| p.1);
    assert!(rate(r.n).unwrap() >= 95.0);
    assert!(rate(r.n - 1).unwrap() < 95.0);
    assert!(r.n < 64, "K = 2 should not need n = d, got {}", r.n);
    assert_ne!(cell_seed(1, r.n, 2), cell_seed(1, r.n - 1, 2));
}

#[test]
fn linear_fit() {
    let f = fit_linear(&[(1.0, 3.0), (2.0, 5.0), (3.0, 7.0)]).unwrap();
    assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
    assert!((f.r_squared - 1.0).abs() < 1e-12);
    assert!(fit_linear(&[(1.0, 1.0)]).is_err());
}

#[test]
fn results_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let plan = SolverPlan::standard(SolverKind::Iht, 20);
    let mut results = Vec::new();
    for n in [20, 40] {
        results.push(run_trials(&plan, &Scenario::noiseless(n, 64, 3), &TrialSpec::new(4, 1)).unwrap().0);
    }
    let csv = dir.path().join("r.csv");
    write_results(&results, &csv, ResultFormat::Csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema_version=1"));
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows = read_results(&csv, ResultFormat::Csv).unwrap();
    assert_eq!(rows, results.iter().map(Into::into).collect::<Vec<_>>());

    let json = dir.path().join("r.json");
    write_results(&results, &json, ResultFormat::Json).unwrap();
    assert_eq!(read_json_results(&json).unwrap(), results);
    assert_eq!(read_results(&json, ResultFormat::Json).unwrap(), rows);

    let empty = dir.path().join("e.csv");
    write_results(&[], &empty, ResultFormat::Csv).unwrap();
    assert_eq!(std::fs::read_to_string(&empty).unwrap(), format!("# schema_version=1\n{CSV_HEADER}\n"));
    assert!(read_results(&empty, ResultFormat::Csv).unwrap().is_empty());

    write_results(&results, &csv, ResultFormat::Csv).unwrap();
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), text);
}

fn write_idx(dir: &std::path::Path, labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
    let images = dir.join("images.idx3");
    let label_path = dir.join("labels.idx1");
    let mut f = std::fs::File::create(&images).unwrap();
    for w in [0x803u32, labels.len() as u32, 28, 28] {
        f.write_all(&w.to_be_bytes()).unwrap();
    }
    for (i, &l) in labels.iter().enumerate() {
        // Digit-dependent stripe so classes are separable.
        let img: Vec<u8> = (0..784).map(|p| if p % 28 == l as usize * 2 { 255 } else { (i % 7) as u8 }).collect();
        f.write_all(&img).unwrap();
    }
    let mut g = std::fs::File::create(&label_path).unwrap();
    g.write_all(&0x801u32.to_be_bytes()).unwrap();
    g.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
    g.write_all(labels).unwrap();
    (images, label_path)
}

#[test]
fn mnist_files_and_pairwise_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<u8> = (0..60).map(|i| (i % 10) as u8).collect();
    let (img, lab) = write_idx(dir.path(), &labels);
    let ds = load_mnist_idx(&img, &lab).unwrap();
    assert_eq!((ds.len(), ds.rows, ds.cols, ds.dim()), (60, 28, 28, 784));
    assert!(ds.labels.iter().all(|l| *l <= 9));
    assert!(ds.images.iter().all(|p| (0.0..=1.0).contains(p)));
    assert_eq!(ds.split, None);
    for (a, b) in DIGIT_PAIRS {
        let t = pairwise_task(&ds, a, b).unwrap();
        assert_eq!(t.n(), 12);
        assert_eq!(t.d(), 784);
    }
    let t = pairwise_task(&ds, 9, 0).unwrap();
    for (i, y) in t.measurements().iter().enumerate() {
        // Dataset order alternates 0, 9, 0, 9, …
        assert_eq!(*y, if i % 2 == 0 { 1.0 } else { -1.0 });
    }
    assert!(pairwise_task(&ds, 3, 3).is_err());

    let short = dir.path().join("short.idx1");
    std::fs::write(&short, [0u8, 0, 8, 1, 0, 0, 0, 10, 1, 2]).unwrap();
    match load_mnist_idx(&img, &short) {
        Err(Error::Idx(IdxError::Truncated { needed: 18, available: 10, .. })) => {}
        other => panic!("expected truncation error, got {other:?}"),
    }
    let few = dir.path().join("few.idx1");
    let mut bytes = 0x801u32.to_be_bytes().to_vec();
    bytes.extend_from_slice(&3u32.to_be_bytes());
    bytes.extend_from_slice(&[1, 2, 3]);
    std::fs::write(&few, bytes).unwrap();
    assert!(matches!(load_mnist_idx(&img, &few), Err(Error::Idx(IdxError::CountMismatch { images: 60, labels: 3 }))));
    assert!(matches!(load_mnist_idx(&lab, &lab), Err(Error::Idx(IdxError::BadMagic { .. }))));
    assert!(matches!(load_mnist_idx(&dir.path().join("missing"), &lab), Err(Error::Io { .. })));
}

#[test]
fn classification_capacity_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<u8> = (0..200).map(|i| if i % 2 == 0 { 1 } else { 7 }).collect();
    let (img, lab) = write_idx(dir.path(), &labels);
    let ds = load_mnist_idx(&img, &lab).unwrap();
    let task = pairwise_task(&ds, 1, 7).unwrap();
    let cfg = ClassifyConfig {
        stages: 10,
        ..ClassifyConfig::default()
    };
    let r = classify_experiment(&task, Some(&task), &[2, 784], &cfg).unwrap();
    assert_eq!(r.m, 600);
    let (small, full) = (&r.outcomes[0], &r.outcomes[1]);
    assert!(full.train_accuracy + 0.005 >= small.train_accuracy);
    assert!(full.train_accuracy > 0.99);
    assert_eq!(small.objective_trace.len(), 10);
    assert!(small.weights.iter().filter(|w| **w != 0.0).count() <= 2);
    assert!(classify_experiment(&task, None, &[], &cfg).is_err());
    let bad = SensingProblem::new(DMatrix::zeros(2, 3), vec![1.0, -1.0]).unwrap();
    assert!(classify_experiment(&task, Some(&bad), &[2], &cfg).is_err());
}

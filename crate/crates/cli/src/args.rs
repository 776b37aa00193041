use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hardthresh::harness::{Design, ResultFormat};
use hardthresh::solvers::SolverKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "hardthresh", version, about = "Hard-thresholding bounds, sparse solvers and recovery experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tight deviation bound of hard thresholding for (k, K, d).
    Bound(BoundArgs),
    /// Monte Carlo recovery at a single (n, K).
    Recover(RecoverArgs),
    /// Phase diagram of success rates over an (n, K) grid.
    Sweep(SweepArgs),
    /// Smallest n reaching a target success rate, per K, with a linear fit.
    MinMeasurements(MinMeasurementsArgs),
    /// Sparse logistic regression on pairwise MNIST tasks.
    Classify(ClassifyArgs),
    /// Convergence coefficients of HT-SVRG for given problem constants.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Json,
}

impl FormatArg {
    pub fn extension(self) -> &'static str {
        match self {
            FormatArg::Csv => "csv",
            FormatArg::Json => "json",
        }
    }
}

impl From<FormatArg> for ResultFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ResultFormat::Csv,
            FormatArg::Json => ResultFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DesignArg {
    Gaussian,
    Rademacher,
}

impl From<DesignArg> for Design {
    fn from(d: DesignArg) -> Self {
        match d {
            DesignArg::Gaussian => Design::Gaussian,
            DesignArg::Rademacher => Design::Rademacher,
        }
    }
}

/// Flags shared by the experiment commands.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Common {
    /// Result file. Defaults to `<command>.<format>` in $HARDTHRESH_OUT_DIR, or the working directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    /// Master seed; every trial seed derives from it.
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Full-size runs: 1000 trials, S = 10000 stages, unit grid steps.
    #[arg(long)]
    pub full_scale: bool,
    /// Worker threads (results do not depend on it). Defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// JSON run manifest whose parameters fill in flags not given on the command line.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    /// Projection sparsity.
    #[arg(long)]
    pub k: usize,
    /// True sparsity.
    #[arg(long = "K")]
    pub big_k: usize,
    /// Dimension.
    #[arg(long)]
    pub d: usize,
    /// Sparsity of the thresholded input, if known.
    #[arg(long)]
    pub s: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RecoverArgs {
    /// iht, pgd, cosamp, grasp, ht-svrg or ht-saga.
    #[arg(long, default_value = "ht-svrg")]
    pub solver: SolverKind,
    /// Measurements.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Dimension.
    #[arg(long, default_value_t = 256)]
    pub d: usize,
    /// True sparsity.
    #[arg(long = "K", default_value_t = 4)]
    pub big_k: usize,
    /// Projection sparsity. Defaults to K for iht/cosamp/grasp and 9K otherwise.
    #[arg(long)]
    pub k: Option<usize>,
    /// Update frequency (inner steps per stage). Defaults to 3n.
    #[arg(long)]
    pub m: Option<usize>,
    /// Step size. Defaults to 1 for iht and 2/λmax(AAᵀ) otherwise.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Stage budget S; batch solvers get (2m/n + 1)S iterations.
    #[arg(long, default_value_t = 10_000)]
    pub stages: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Standard deviation of additive Gaussian measurement noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub design: DesignArg,
    /// ℓ₂ radius constraint on the iterates.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Ridge weight γ.
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    /// Relative error below which a trial counts as recovered.
    #[arg(long, default_value_t = 1e-3)]
    pub success_tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long, default_value = "pgd")]
    pub solver: SolverKind,
    #[arg(long, default_value_t = 256)]
    pub d: usize,
    #[arg(long, default_value_t = 16)]
    pub n_min: usize,
    /// Defaults to d.
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub n_step: usize,
    #[arg(long = "K-min", default_value_t = 1)]
    pub k_min: usize,
    #[arg(long = "K-max", default_value_t = 25)]
    pub k_max: usize,
    #[arg(long = "K-step", default_value_t = 4)]
    pub k_step: usize,
    /// Projection sparsity as a multiple of K. Defaults to 1 for iht/cosamp/grasp and 9 otherwise.
    #[arg(long)]
    pub k_factor: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Stage budget S (desk default; the full-scale value is 10000).
    #[arg(long, default_value_t = 400)]
    pub stages: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MinMeasurementsArgs {
    #[arg(long, default_value = "pgd")]
    pub solver: SolverKind,
    /// Comma-separated true sparsities.
    #[arg(long = "K", value_delimiter = ',', default_value = "2,6,10,14,18")]
    pub big_k: Vec<usize>,
    /// Target success rate in percent.
    #[arg(long, default_value_t = 95.0)]
    pub target: f64,
    #[arg(long, default_value_t = 256)]
    pub d: usize,
    #[arg(long, default_value_t = 16)]
    pub coarse_step: usize,
    #[arg(long, default_value_t = 400)]
    pub stages: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ClassifyArgs {
    /// Directory holding train-/t10k- images and labels in IDX format.
    #[arg(long, env = "MNIST_DIR")]
    pub mnist_dir: PathBuf,
    /// Digit pairs as a-b, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "0-9,1-7,2-3,4-5,6-8")]
    pub tasks: Vec<String>,
    /// Sparsity levels to compare.
    #[arg(long, value_delimiter = ',', default_value = "10,20,50,70,100,200,400,784")]
    pub k_list: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub stages: usize,
    /// Update frequency. Defaults to 3n.
    #[arg(long)]
    pub m: Option<usize>,
    /// Ridge weight γ.
    #[arg(long, default_value_t = 1e-5)]
    pub gamma: f64,
    /// Defaults to 2/λmax(AAᵀ).
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergenceArgs {
    /// Step size η (or give --eta-frac).
    #[arg(long, conflicts_with = "eta_frac")]
    pub eta: Option<f64>,
    /// Step size as a fraction of 1/L.
    #[arg(long)]
    pub eta_frac: Option<f64>,
    /// Restricted strong convexity α (or give --c).
    #[arg(long, conflicts_with = "c")]
    pub alpha: Option<f64>,
    /// Per-sample restricted smoothness L.
    #[arg(long = "L", default_value_t = 1.0)]
    pub l: f64,
    /// Condition number L/α.
    #[arg(long)]
    pub c: Option<f64>,
    /// Update frequency.
    #[arg(long)]
    pub m: Option<f64>,
    /// Expansiveness factor ν of the projection.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Radius bounding the optimum.
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    /// Restricted gradient norm at the optimum.
    #[arg(long = "T", default_value_t = 0.0)]
    pub t: f64,
    /// Use ν = 5c/(5c−1), m = 12.5(5c−1) and T = 0, which should give β = 0.8 at η = 1/(5L).
    #[arg(long)]
    pub corollary1: bool,
}

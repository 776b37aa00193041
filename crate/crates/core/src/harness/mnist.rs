//! MNIST IDX files and the pairwise logistic classification experiment.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, io_error, IdxError, Result};
use crate::objectives::{RegularizedLogistic, SensingProblem};
use crate::solvers::{ht_svrg, SnapshotRule, StepSize, SvrgConfig};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// The five digit pairs of the classification experiment.
pub const DIGIT_PAIRS: [(u8, u8); 5] = [(0, 9), (1, 7), (2, 3), (4, 5), (6, 8)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct MnistDataset {
    /// Row-major `n × (rows·cols)`, pixels scaled to `[0, 1]`.
    pub images: Vec<f64>,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
    /// Inferred from the item count (60000 train, 10000 test).
    pub split: Option<Split>,
}

impl MnistDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let p = self.dim();
        &self.images[i * p..(i + 1) * p]
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &'static str) -> std::result::Result<u32, IdxError> {
    match bytes.get(at..at + 4) {
        Some(b) => Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]])),
        None => Err(IdxError::Truncated {
            what,
            needed: at + 4,
            available: bytes.len(),
        }),
    }
}

fn check_magic(bytes: &[u8], expected: u32, what: &'static str) -> std::result::Result<(), IdxError> {
    let found = be_u32(bytes, 0, what)?;
    if found != expected {
        return Err(IdxError::BadMagic { what, expected, found });
    }
    Ok(())
}

/// Parses an IDX3 image file: returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> std::result::Result<(usize, usize, usize, Vec<f64>), IdxError> {
    const WHAT: &str = "image file";
    check_magic(bytes, IMAGE_MAGIC, WHAT)?;
    let count = be_u32(bytes, 4, WHAT)? as usize;
    let rows = be_u32(bytes, 8, WHAT)? as usize;
    let cols = be_u32(bytes, 12, WHAT)? as usize;
    let needed = 16 + count * rows * cols;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            what: WHAT,
            needed,
            available: bytes.len(),
        });
    }
    let pixels = bytes[16..needed].iter().map(|&b| b as f64 / 255.0).collect();
    Ok((count, rows, cols, pixels))
}

/// Parses an IDX1 label file.
pub fn parse_idx_labels(bytes: &[u8]) -> std::result::Result<Vec<u8>, IdxError> {
    const WHAT: &str = "label file";
    check_magic(bytes, LABEL_MAGIC, WHAT)?;
    let count = be_u32(bytes, 4, WHAT)? as usize;
    let needed = 8 + count;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            what: WHAT,
            needed,
            available: bytes.len(),
        });
    }
    let labels = bytes[8..needed].to_vec();
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, l)| **l > 9) {
        return Err(IdxError::BadLabel { index, label });
    }
    Ok(labels)
}

pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<MnistDataset> {
    let image_bytes = std::fs::read(images_path).map_err(io_error(images_path))?;
    let label_bytes = std::fs::read(labels_path).map_err(io_error(labels_path))?;
    let (count, rows, cols, images) = parse_idx_images(&image_bytes)?;
    let labels = parse_idx_labels(&label_bytes)?;
    if labels.len() != count {
        return Err(IdxError::CountMismatch {
            images: count,
            labels: labels.len(),
        }
        .into());
    }
    let split = match count {
        60_000 => Some(Split::Train),
        10_000 => Some(Split::Test),
        _ => None,
    };
    Ok(MnistDataset {
        images,
        labels,
        rows,
        cols,
        split,
    })
}

/// Images of digits `a` and `b` with the smaller digit labelled `+1` and
/// the larger `−1`, in dataset order.
pub fn pairwise_task(dataset: &MnistDataset, digit_a: u8, digit_b: u8) -> Result<SensingProblem> {
    if digit_a == digit_b {
        return invalid(format!("pairwise task needs two different digits, got {digit_a} twice"));
    }
    if digit_a > 9 || digit_b > 9 {
        return invalid("digits must lie in 0..=9");
    }
    let small = digit_a.min(digit_b);
    let chosen: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset.labels[i] == digit_a || dataset.labels[i] == digit_b)
        .collect();
    if chosen.is_empty() {
        return invalid(format!("no images of digits {digit_a} or {digit_b}"));
    }
    let p = dataset.dim();
    let design = DMatrix::from_fn(chosen.len(), p, |r, c| dataset.image(chosen[r])[c]);
    let y = chosen
        .iter()
        .map(|&i| if dataset.labels[i] == small { 1.0 } else { -1.0 })
        .collect();
    SensingProblem::new(design, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub stages: usize,
    /// `None` means `3n`.
    pub m: Option<usize>,
    pub gamma: f64,
    pub eta: StepSize,
    pub omega: Option<f64>,
    pub seed: u64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            stages: 20,
            m: None,
            gamma: 1e-5,
            eta: StepSize::Heuristic,
            omega: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KOutcome {
    pub k: usize,
    pub train_accuracy: f64,
    /// `None` without a test set.
    pub test_accuracy: Option<f64>,
    /// `F(x̃ˢ)` for each stage.
    pub objective_trace: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub eta: f64,
    pub m: usize,
    pub outcomes: Vec<KOutcome>,
}

/// Fraction of samples with `sign(a_iᵀx) = y_i` (zero margin counts as wrong).
pub fn accuracy(problem: &SensingProblem, x: &[f64]) -> f64 {
    let z = problem.apply(x);
    let right = z.iter().zip(problem.measurements()).filter(|(zi, yi)| **zi * **yi > 0.0).count();
    right as f64 / problem.n() as f64
}

/// Trains sparse logistic regression with HT-SVRG for each `k`.
pub fn classify_experiment(
    train: &SensingProblem,
    test: Option<&SensingProblem>,
    k_list: &[usize],
    config: &ClassifyConfig,
) -> Result<ClassificationResult> {
    if k_list.is_empty() {
        return invalid("at least one sparsity level is required");
    }
    if let Some(t) = test {
        if t.d() != train.d() {
            return invalid("train and test features differ in dimension");
        }
    }
    let model = RegularizedLogistic::new(train.clone(), config.gamma)?;
    let eta = config.eta.resolve(train)?;
    let m = config.m.unwrap_or(3 * train.n());
    let mut outcomes = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let mut svrg = SvrgConfig::new(k.min(train.d()), m);
        svrg.stages = config.stages;
        svrg.eta = StepSize::Fixed(eta);
        svrg.omega = config.omega;
        svrg.rng_seed = config.seed;
        svrg.snapshot_rule = SnapshotRule::UniformJ;
        svrg.record_stage_objectives = true;
        svrg.tol_residual = 0.0;
        let report = ht_svrg(&model, &svrg)?;
        outcomes.push(KOutcome {
            k,
            train_accuracy: accuracy(train, &report.x_final),
            test_accuracy: test.map(|t| accuracy(t, &report.x_final)),
            objective_trace: report.objective_trace,
            weights: report.x_final,
        });
    }
    Ok(ClassificationResult { eta, m, outcomes })
}

//! Decomposable objectives `F(x) = (1/n) Σ f_i(x)` over a sensing problem.
//!
//! Both models are generalized linear: `f_i(x) = ℓ(a_iᵀx, y_i) + (γ/2)‖x‖²`,
//! with the ridge term inside every `f_i` so that per-sample gradients stay
//! unbiased for `∇F`.

use std::marker::PhantomData;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{self, mul_sparse, mul_transpose};
use crate::rng;
use crate::vector::{dot, nnz, norm2};

/// Design matrix, measurements and (optionally) the planted signal.
#[derive(Debug, Clone)]
pub struct SensingProblem {
    design: DMatrix<f64>,
    y: Vec<f64>,
    x_true: Option<Vec<f64>>,
    noise_sigma: Option<f64>,
}

impl SensingProblem {
    pub fn new(design: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        let (n, d) = design.shape();
        if n == 0 || d == 0 {
            return invalid(format!("design must be non-empty, got {n}×{d}"));
        }
        if y.len() != n {
            return invalid(format!("{} measurements for a design with {n} rows", y.len()));
        }
        if design.iter().chain(&y).any(|v| !v.is_finite()) {
            return invalid("design and measurements must be finite");
        }
        Ok(Self {
            design,
            y,
            x_true: None,
            noise_sigma: None,
        })
    }

    pub fn with_truth(mut self, x_true: Vec<f64>, noise_sigma: f64) -> Result<Self> {
        if x_true.len() != self.d() {
            return invalid(format!("ground truth has length {}, expected {}", x_true.len(), self.d()));
        }
        if !(noise_sigma >= 0.0) {
            return invalid(format!("noise level must be nonnegative, got {noise_sigma}"));
        }
        self.x_true = Some(x_true);
        self.noise_sigma = Some(noise_sigma);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn d(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn measurements(&self) -> &[f64] {
        &self.y
    }

    pub fn x_true(&self) -> Option<&[f64]> {
        self.x_true.as_deref()
    }

    pub fn noise_sigma(&self) -> Option<f64> {
        self.noise_sigma
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        mul_sparse(&self.design, x, &mut out);
        out
    }

    /// `‖y − A x‖₂`.
    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        let ax = self.apply(x);
        ax.iter()
            .zip(&self.y)
            .map(|(p, q)| (q - p) * (q - p))
            .sum::<f64>()
            .sqrt()
    }

    /// Relative ℓ₂ error against the planted signal, if there is one.
    pub fn relative_error(&self, x: &[f64]) -> Option<f64> {
        let truth = self.x_true.as_ref()?;
        let num = crate::vector::dist2(x, truth);
        let den = norm2(truth);
        Some(if den == 0.0 { num } else { num / den })
    }
}

/// `2 / σ_max(AAᵀ)`, with `σ_max` from power iteration (tol 1e-8, 1000 iterations).
pub fn heuristic_step_size(problem: &SensingProblem) -> Result<f64> {
    let top = linalg::gram_spectral_norm(problem.design(), 1e-8, 1000);
    if !(top > 0.0) {
        return invalid("heuristic step size needs a nonzero design matrix");
    }
    Ok(2.0 / top)
}

/// A finite-sum objective with per-sample access.
pub trait ObjectiveModel: Sync {
    fn problem(&self) -> &SensingProblem;

    fn gamma(&self) -> f64;

    fn name(&self) -> &'static str;

    fn num_samples(&self) -> usize {
        self.problem().n()
    }

    fn dim(&self) -> usize {
        self.problem().d()
    }

    fn sample_value(&self, i: usize, x: &[f64]) -> f64;

    /// Writes `∇f_i(x)` into `out`.
    fn sample_gradient(&self, i: usize, x: &[f64], out: &mut [f64]);

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.num_samples();
        (0..n).map(|i| self.sample_value(i, x)).sum::<f64>() / n as f64
    }

    /// Writes `∇F(x)` into `out`.
    fn full_gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = self.num_samples();
        let mut g = vec![0.0; out.len()];
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            self.sample_gradient(i, x, &mut g);
            out.iter_mut().zip(&g).for_each(|(o, v)| *o += v);
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
    }

    /// Writes `Σ_i ∇f_i(x) = n ∇F(x)` into `out`; batch solvers step on this scale.
    fn sum_gradient(&self, x: &[f64], out: &mut [f64]) {
        self.full_gradient(x, out);
        let n = self.num_samples() as f64;
        out.iter_mut().for_each(|v| *v *= n);
    }

    /// `out += coef · (∇f_i(x) − ∇f_i(x_ref))`.
    fn add_sample_gradient_difference(&self, i: usize, x: &[f64], x_ref: &[f64], coef: f64, out: &mut [f64]) {
        let mut g = vec![0.0; out.len()];
        let mut h = vec![0.0; out.len()];
        self.sample_gradient(i, x, &mut g);
        self.sample_gradient(i, x_ref, &mut h);
        for ((o, p), q) in out.iter_mut().zip(&g).zip(&h) {
            *o += coef * (p - q);
        }
    }

    /// Stopping residual; `‖∇F(x)‖₂` unless the model has something better.
    fn residual(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.full_gradient(x, &mut g);
        norm2(&g)
    }

    /// Exact minimizer of `Σ f_i` over vectors supported on `support`, when
    /// the model has a closed form.
    fn restricted_minimizer(&self, _support: &[usize]) -> Option<(Vec<f64>, bool)> {
        None
    }

    /// Per-sample curvature `ℓ''` bounds `(lower, upper)` for row `i` when
    /// `|a_iᵀx| ≤ reach`.
    fn curvature_weights(&self, i: usize, reach: f64) -> (f64, f64);
}

/// Scalar loss `ℓ(z, y)` of a generalized linear model.
pub trait Loss: Send + Sync + 'static {
    const NAME: &'static str;
    fn value(z: f64, y: f64) -> f64;
    fn derivative(z: f64, y: f64) -> f64;
    /// Bounds on `ℓ''(z, y)` over `|z| ≤ reach`.
    fn curvature(reach: f64) -> (f64, f64);
    fn check_labels(_y: &[f64]) -> Result<()> {
        Ok(())
    }
}

/// `ℓ(z, y) = ½(z − y)²`.
#[derive(Debug, Clone, Copy)]
pub struct SquaredLoss;

impl Loss for SquaredLoss {
    const NAME: &'static str = "least_squares";

    fn value(z: f64, y: f64) -> f64 {
        0.5 * (z - y) * (z - y)
    }

    fn derivative(z: f64, y: f64) -> f64 {
        z - y
    }

    fn curvature(_reach: f64) -> (f64, f64) {
        (1.0, 1.0)
    }
}

/// `ℓ(z, y) = log(1 + exp(−2yz))` with labels `y ∈ {+1, −1}`.
///
/// The factor 2 in the exponent matches the likelihood
/// `P(y | a) = exp(2y aᵀx) / (1 + exp(2y aᵀx))`; it is not the textbook form.
#[derive(Debug, Clone, Copy)]
pub struct LogisticLoss;

/// `log(1 + e^u)` without overflow.
fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// `1 / (1 + e^{−u})` without overflow.
fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

impl Loss for LogisticLoss {
    const NAME: &'static str = "logistic";

    fn value(z: f64, y: f64) -> f64 {
        softplus(-2.0 * y * z)
    }

    fn derivative(z: f64, y: f64) -> f64 {
        -2.0 * y * sigmoid(-2.0 * y * z)
    }

    fn curvature(reach: f64) -> (f64, f64) {
        let s = sigmoid(2.0 * reach);
        (4.0 * s * (1.0 - s), 1.0)
    }

    fn check_labels(y: &[f64]) -> Result<()> {
        match y.iter().position(|v| *v != 1.0 && *v != -1.0) {
            Some(i) => invalid(format!("logistic labels must be ±1; y[{i}] = {}", y[i])),
            None => Ok(()),
        }
    }
}

/// GLM objective with a row-major copy of the design for per-sample access.
#[derive(Debug, Clone)]
pub struct LinearModel<L> {
    problem: SensingProblem,
    rows: Vec<f64>,
    gamma: f64,
    _loss: PhantomData<L>,
}

/// `f_i(x) = ½(a_iᵀx − y_i)² + (γ/2)‖x‖²`.
pub type RegularizedLeastSquares = LinearModel<SquaredLoss>;

/// `f_i(x) = log(1 + exp(−2 y_i a_iᵀx)) + (γ/2)‖x‖²`.
pub type RegularizedLogistic = LinearModel<LogisticLoss>;

impl<L: Loss> LinearModel<L> {
    pub fn new(problem: SensingProblem, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return invalid(format!("ridge weight must be finite and nonnegative, got {gamma}"));
        }
        L::check_labels(problem.measurements())?;
        let rows = problem.design().transpose().as_slice().to_vec();
        Ok(Self {
            problem,
            rows,
            gamma,
            _loss: PhantomData,
        })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.problem.d();
        &self.rows[i * d..(i + 1) * d]
    }

    /// `Σ_i ∇f_i(x)` computed from `A x` in one pass.
    fn loss_residuals(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.problem.apply(x);
        for (zi, yi) in z.iter_mut().zip(self.problem.measurements()) {
            *zi = L::derivative(*zi, *yi);
        }
        z
    }
}

impl<L: Loss> ObjectiveModel for LinearModel<L> {
    fn problem(&self) -> &SensingProblem {
        &self.problem
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn name(&self) -> &'static str {
        L::NAME
    }

    fn sample_value(&self, i: usize, x: &[f64]) -> f64 {
        let z = dot(self.row(i), x);
        L::value(z, self.problem.y[i]) + 0.5 * self.gamma * dot(x, x)
    }

    fn sample_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let row = self.row(i);
        let r = L::derivative(dot(row, x), self.problem.y[i]);
        for ((o, a), xi) in out.iter_mut().zip(row).zip(x) {
            *o = r * a + self.gamma * xi;
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let z = self.problem.apply(x);
        let n = self.problem.n() as f64;
        let loss: f64 = z
            .iter()
            .zip(self.problem.measurements())
            .map(|(zi, yi)| L::value(*zi, *yi))
            .sum();
        loss / n + 0.5 * self.gamma * dot(x, x)
    }

    fn full_gradient(&self, x: &[f64], out: &mut [f64]) {
        let r = self.loss_residuals(x);
        mul_transpose(self.problem.design(), &r, out);
        let n = self.problem.n() as f64;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = *o / n + self.gamma * xi;
        }
    }

    fn sum_gradient(&self, x: &[f64], out: &mut [f64]) {
        let r = self.loss_residuals(x);
        mul_transpose(self.problem.design(), &r, out);
        if self.gamma != 0.0 {
            let ng = self.problem.n() as f64 * self.gamma;
            out.iter_mut().zip(x).for_each(|(o, xi)| *o += ng * xi);
        }
    }

    fn add_sample_gradient_difference(&self, i: usize, x: &[f64], x_ref: &[f64], coef: f64, out: &mut [f64]) {
        let row = self.row(i);
        let y = self.problem.y[i];
        let dr = L::derivative(dot(row, x), y) - L::derivative(dot(row, x_ref), y);
        let c = coef * dr;
        if self.gamma == 0.0 {
            if c != 0.0 {
                out.iter_mut().zip(row).for_each(|(o, a)| *o += c * a);
            }
        } else {
            let cg = coef * self.gamma;
            for (((o, a), p), q) in out.iter_mut().zip(row).zip(x).zip(x_ref) {
                *o += c * a + cg * (p - q);
            }
        }
    }

    fn residual(&self, x: &[f64]) -> f64 {
        if L::NAME == SquaredLoss::NAME && self.gamma == 0.0 {
            return self.problem.residual_norm(x);
        }
        let mut g = vec![0.0; self.dim()];
        self.full_gradient(x, &mut g);
        norm2(&g)
    }

    fn restricted_minimizer(&self, support: &[usize]) -> Option<(Vec<f64>, bool)> {
        if L::NAME != SquaredLoss::NAME {
            return None;
        }
        let ridge = self.gamma * self.problem.n() as f64;
        let sol = linalg::restricted_least_squares(self.problem.design(), support, self.problem.measurements(), ridge);
        let mut x = vec![0.0; self.dim()];
        for (&j, z) in support.iter().zip(&sol.coefficients) {
            x[j] = *z;
        }
        Some((x, sol.rank_deficient))
    }

    fn curvature_weights(&self, _i: usize, reach: f64) -> (f64, f64) {
        L::curvature(reach)
    }
}

/// `T = max ‖P_Ω ∇F(x̂)‖₂` over `Ω ⊇ supp(x̂)` with `|Ω| ≤ r`.
pub fn restricted_gradient_norm_t(model: &dyn ObjectiveModel, x_hat: &[f64], r: usize) -> Result<f64> {
    let mut g = vec![0.0; model.dim()];
    model.full_gradient(x_hat, &mut g);
    restricted_norm(&g, x_hat, r)
}

/// The same maximization for an explicit gradient `g`: all of `g` on
/// `supp(x̂)` plus the `r − ‖x̂‖₀` largest remaining entries.
pub fn restricted_norm(g: &[f64], x_hat: &[f64], r: usize) -> Result<f64> {
    let s = nnz(x_hat);
    if r < s {
        return invalid(format!("support budget {r} is below ‖x̂‖₀ = {s}"));
    }
    let mut on = 0.0;
    let mut off: Vec<f64> = Vec::with_capacity(g.len());
    for (gi, xi) in g.iter().zip(x_hat) {
        if *xi != 0.0 {
            on += gi * gi;
        } else {
            off.push(gi * gi);
        }
    }
    let extra = (r - s).min(off.len());
    if extra > 0 && extra < off.len() {
        off.select_nth_unstable_by(extra - 1, |a, b| b.total_cmp(a));
    }
    Ok((on + off[..extra].iter().sum::<f64>()).sqrt())
}

/// Settings for Monte Carlo curvature probing.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvatureProbe {
    /// Support size of each probe.
    pub sparsity: usize,
    pub num_probes: usize,
    pub seed: u64,
    /// ℓ₂ radius bounding the iterates; an infinite radius gives no logistic lower envelope.
    pub radius: f64,
}

impl CurvatureProbe {
    pub fn new(sparsity: usize, seed: u64) -> Self {
        Self {
            sparsity,
            num_probes: 50,
            seed,
            radius: f64::INFINITY,
        }
    }
}

/// Heuristic restricted curvature bounds from random supports.
///
/// `alpha_hat`/`l_hat` are extreme eigenvalues of `A_SᵀWA_S + γI` over the
/// probes (W the per-row curvature bounds), i.e. on the scale of the design
/// Gram matrix. `alpha_objective` is the matching RSC estimate for `F`
/// itself, `λ_min(A_SᵀWA_S)/n + γ`. `l_sample_max` is the per-sample RSS
/// constant `max_i max_{|S|=r} ‖a_{i,S}‖²·ℓ''_max + γ`, computed exactly from
/// the `r` largest squared entries of each row; the stochastic convergence
/// theory uses this one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    pub alpha_hat: f64,
    pub l_hat: f64,
    pub alpha_objective: f64,
    pub l_sample_max: f64,
    pub probes: usize,
}

impl CurvatureEstimate {
    /// `l_hat / alpha_hat`; infinite for a rank-deficient probe without ridge.
    pub fn condition_number(&self) -> f64 {
        if self.alpha_hat > 0.0 {
            self.l_hat / self.alpha_hat
        } else {
            f64::INFINITY
        }
    }
}

pub fn estimate_restricted_curvature(model: &dyn ObjectiveModel, probe: &CurvatureProbe) -> Result<CurvatureEstimate> {
    let (n, d) = (model.num_samples(), model.dim());
    let r = probe.sparsity;
    if r == 0 || r > d {
        return invalid(format!("probe sparsity must lie in 1..={d}, got {r}"));
    }
    if probe.num_probes == 0 {
        return invalid("at least one probe is required");
    }
    let a = model.problem().design();
    let gamma = model.gamma();
    let mut rng = rng::stream(probe.seed, 0);
    let mut squares = vec![0.0; d];
    let mut l_sample_max = f64::NEG_INFINITY;
    for i in 0..n {
        for (s, j) in squares.iter_mut().zip(0..d) {
            *s = a[(i, j)] * a[(i, j)];
        }
        if r < d {
            squares.select_nth_unstable_by(r - 1, |p, q| q.total_cmp(p));
        }
        let top: f64 = squares[..r].iter().sum();
        let (_, hi) = model.curvature_weights(i, probe.radius * top.sqrt());
        l_sample_max = l_sample_max.max(hi * top + gamma);
    }
    let mut est = CurvatureEstimate {
        alpha_hat: f64::INFINITY,
        l_hat: f64::NEG_INFINITY,
        alpha_objective: f64::INFINITY,
        l_sample_max,
        probes: probe.num_probes,
    };
    for _ in 0..probe.num_probes {
        let mut support = sample(&mut rng, d, r).into_vec();
        support.sort_unstable();
        let sub = linalg::submatrix(a, &support);
        let mut lower_w = vec![0.0; n];
        let mut upper_w = vec![0.0; n];
        for i in 0..n {
            let row_norm = (0..r).map(|c| sub[(i, c)] * sub[(i, c)]).sum::<f64>().sqrt();
            let (lo, hi) = model.curvature_weights(i, probe.radius * row_norm);
            lower_w[i] = lo;
            upper_w[i] = hi;
        }
        let weighted_gram = |w: &[f64]| {
            let mut g = DMatrix::zeros(r, r);
            for p in 0..r {
                for q in p..r {
                    let v: f64 = (0..n).map(|i| w[i] * sub[(i, p)] * sub[(i, q)]).sum();
                    g[(p, q)] = v;
                    g[(q, p)] = v;
                }
            }
            g
        };
        let (lo, _) = linalg::symmetric_extremes(weighted_gram(&lower_w));
        let (_, hi) = linalg::symmetric_extremes(weighted_gram(&upper_w));
        let lo = lo.max(0.0);
        est.alpha_hat = est.alpha_hat.min(lo + gamma);
        est.l_hat = est.l_hat.max(hi + gamma);
        est.alpha_objective = est.alpha_objective.min(lo / n as f64 + gamma);
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_problem(d: usize, scale: f64) -> SensingProblem {
        SensingProblem::new(DMatrix::identity(d, d) * scale, vec![1.0; d]).unwrap()
    }

    #[test]
    fn problem_validation() {
        assert!(SensingProblem::new(DMatrix::zeros(2, 3), vec![0.0; 3]).is_err());
        assert!(SensingProblem::new(DMatrix::zeros(0, 3), vec![]).is_err());
        let p = SensingProblem::new(DMatrix::zeros(2, 3), vec![0.0; 2]).unwrap();
        assert!(p.clone().with_truth(vec![0.0; 2], 0.0).is_err());
        assert!(p.with_truth(vec![0.0; 3], -1.0).is_err());
    }

    #[test]
    fn heuristic_step_examples() {
        let step = heuristic_step_size(&identity_problem(5, 1.0)).unwrap();
        assert_relative_eq!(step, 2.0, max_relative = 1e-8);
        let step = heuristic_step_size(&identity_problem(5, 3.0)).unwrap();
        assert_relative_eq!(step, 2.0 / 9.0, max_relative = 1e-8);
        let zero = SensingProblem::new(DMatrix::zeros(3, 3), vec![0.0; 3]).unwrap();
        assert!(heuristic_step_size(&zero).is_err());
    }

    #[test]
    fn t_quantity_examples() {
        let g = [0.1, 0.3, -0.2, 0.05];
        let x = [1.0, 0.0, 0.0, 0.0];
        assert_relative_eq!(restricted_norm(&g, &x, 2).unwrap(), 0.1f64.hypot(0.3), max_relative = 1e-15);
        assert_relative_eq!(restricted_norm(&g, &x, 4).unwrap(), norm2(&g), max_relative = 1e-15);
        assert_relative_eq!(restricted_norm(&g, &x, 1).unwrap(), 0.1, max_relative = 1e-15);
        assert!(restricted_norm(&g, &[1.0, 1.0, 0.0, 0.0], 1).is_err());
        assert_eq!(restricted_norm(&[0.0; 4], &x, 3).unwrap(), 0.0);
    }

    #[test]
    fn t_at_fixed_point_is_zero() {
        let m = RegularizedLeastSquares::new(identity_problem(4, 1.0), 0.0).unwrap();
        let t = restricted_gradient_norm_t(&m, &[1.0; 4], 4).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn curvature_identity_examples() {
        for (gamma, want) in [(0.0, 1.0), (0.5, 1.5)] {
            let m = RegularizedLeastSquares::new(identity_problem(6, 1.0), gamma).unwrap();
            for r in [1, 3, 6] {
                let est = estimate_restricted_curvature(&m, &CurvatureProbe::new(r, 1)).unwrap();
                assert_relative_eq!(est.alpha_hat, want, max_relative = 1e-12);
                assert_relative_eq!(est.l_hat, want, max_relative = 1e-12);
                assert!(est.alpha_hat <= est.l_hat);
            }
        }
    }

    #[test]
    fn logistic_is_overflow_safe() {
        for z in [-700.0, -50.0, 0.0, 50.0, 700.0] {
            for y in [1.0, -1.0] {
                assert!(LogisticLoss::value(z, y).is_finite());
                assert!(LogisticLoss::derivative(z, y).is_finite());
            }
        }
        assert_relative_eq!(LogisticLoss::value(700.0, -1.0), 1400.0, max_relative = 1e-12);
        assert_relative_eq!(LogisticLoss::value(0.0, 1.0), 2f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn logistic_rejects_bad_labels() {
        let p = SensingProblem::new(DMatrix::identity(2, 2), vec![1.0, 0.0]).unwrap();
        assert!(RegularizedLogistic::new(p, 0.0).is_err());
    }
}

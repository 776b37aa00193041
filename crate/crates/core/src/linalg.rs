//! Small dense kernels on column-major design matrices.

use nalgebra::{DMatrix, DVector};

use crate::rng::splitmix64;

/// `out = A x`, skipping zero entries of `x`.
pub fn mul_sparse(a: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let n = a.nrows();
    out.iter_mut().for_each(|v| *v = 0.0);
    let data = a.as_slice();
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            let col = &data[j * n..(j + 1) * n];
            for (o, c) in out.iter_mut().zip(col) {
                *o += c * xj;
            }
        }
    }
}

/// `out = Aᵀ r`.
pub fn mul_transpose(a: &DMatrix<f64>, r: &[f64], out: &mut [f64]) {
    let n = a.nrows();
    for (o, col) in out.iter_mut().zip(a.as_slice().chunks_exact(n)) {
        *o = col.iter().zip(r).map(|(c, v)| c * v).sum();
    }
}

/// Largest eigenvalue of `AᵀA` (equivalently of `AAᵀ`) by power iteration.
///
/// Stops when the relative change of the Rayleigh quotient drops below
/// `tol` or after `max_iters` iterations.
pub fn gram_spectral_norm(a: &DMatrix<f64>, tol: f64, max_iters: usize) -> f64 {
    let (n, d) = a.shape();
    if n == 0 || d == 0 {
        return 0.0;
    }
    // Deterministic, generically non-orthogonal start.
    let mut v: Vec<f64> = (0..d as u64)
        .map(|j| 0.5 + (splitmix64(j) >> 11) as f64 / (1u64 << 53) as f64)
        .collect();
    let mut av = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut lambda = 0.0;
    for _ in 0..max_iters {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        mul_sparse(a, &v, &mut av);
        mul_transpose(a, &av, &mut w);
        let next: f64 = w.iter().zip(&v).map(|(p, q)| p * q).sum();
        std::mem::swap(&mut v, &mut w);
        if (next - lambda).abs() <= tol * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Columns `cols` of `a` as a dense `n × |cols|` matrix.
pub fn submatrix(a: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let n = a.nrows();
    let mut data = Vec::with_capacity(n * cols.len());
    for &j in cols {
        data.extend_from_slice(&a.as_slice()[j * n..(j + 1) * n]);
    }
    DMatrix::from_vec(n, cols.len(), data)
}

/// Solution of a support-restricted least-squares problem.
#[derive(Debug, Clone)]
pub struct RestrictedSolution {
    /// Coefficients in the order of the requested columns.
    pub coefficients: Vec<f64>,
    pub rank_deficient: bool,
}

/// Minimum-norm minimizer of `½‖A_T z − y‖² + (ridge/2)‖z‖²` via SVD.
pub fn restricted_least_squares(a: &DMatrix<f64>, cols: &[usize], y: &[f64], ridge: f64) -> RestrictedSolution {
    let n = a.nrows();
    let t = cols.len();
    if t == 0 {
        return RestrictedSolution {
            coefficients: Vec::new(),
            rank_deficient: false,
        };
    }
    let (m, rhs) = if ridge > 0.0 {
        let mut m = DMatrix::zeros(n + t, t);
        m.view_mut((0, 0), (n, t)).copy_from(&submatrix(a, cols));
        let s = ridge.sqrt();
        for i in 0..t {
            m[(n + i, i)] = s;
        }
        let mut rhs = DVector::zeros(n + t);
        rhs.rows_mut(0, n).copy_from_slice(y);
        (m, rhs)
    } else {
        (submatrix(a, cols), DVector::from_column_slice(y))
    };
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = f64::EPSILON * (svd.singular_values.len().max(rhs.len()) as f64) * smax;
    let rank_deficient = svd.singular_values.len() < t || svd.singular_values.iter().any(|s| *s <= eps);
    let z = svd
        .solve(&rhs, eps)
        .map(|z| z.column(0).iter().copied().collect())
        .unwrap_or_else(|_| vec![0.0; t]);
    RestrictedSolution {
        coefficients: z,
        rank_deficient,
    }
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn symmetric_extremes(m: DMatrix<f64>) -> (f64, f64) {
    let eig = m.symmetric_eigen();
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn power_iteration_matches_svd() {
        let a = DMatrix::from_fn(7, 5, |i, j| ((i * 5 + j) as f64).sin());
        let s = a.clone().svd(false, false).singular_values.max();
        assert_relative_eq!(gram_spectral_norm(&a, 1e-12, 5000), s * s, max_relative = 1e-8);
    }

    #[test]
    fn restricted_solve_is_orthogonal() {
        let a = DMatrix::from_fn(10, 6, |i, j| ((i * i * 7 + j * j * 3 + i * j) as f64).cos());
        let y: Vec<f64> = (0..10).map(|i| i as f64 * 0.3 - 1.0).collect();
        let cols = [0, 2, 5];
        let sol = restricted_least_squares(&a, &cols, &y, 0.0);
        let sub = submatrix(&a, &cols);
        let r = DVector::from_column_slice(&y) - &sub * DVector::from_column_slice(&sol.coefficients);
        let g = sub.transpose() * r;
        assert!(g.amax() < 1e-10);
        assert!(!sol.rank_deficient);
    }

    #[test]
    fn duplicate_columns_flag_rank_deficiency() {
        let a = DMatrix::from_fn(4, 2, |i, _| i as f64 + 1.0);
        let sol = restricted_least_squares(&a, &[0, 1], &[1.0, 2.0, 3.0, 4.0], 0.0);
        assert!(sol.rank_deficient);
        // minimum-norm split of the single coefficient
        assert_relative_eq!(sol.coefficients[0], sol.coefficients[1], max_relative = 1e-10);
        assert_relative_eq!(sol.coefficients[0] + sol.coefficients[1], 1.0, max_relative = 1e-10);
    }
}

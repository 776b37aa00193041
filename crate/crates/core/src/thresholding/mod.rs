//! The hard-thresholding operator, support and ball projections, and the
//! tight deviation bound
//!
//! ```text
//! ‖H_k(b) − a‖₂ ≤ √ν ‖b − a‖₂,   ν = 1 + (ρ + √((4+ρ)ρ)) / 2,
//! ρ = min{K, d−k} / (k − K + min{K, d−k})
//! ```
//!
//! valid for every `b ∈ R^d` and every K-sparse `a` once `k ≥ K`.

mod oracle;

pub use oracle::{best_sparse_partner, worst_case_ratio, worst_case_search, OracleConfig, OracleOutcome};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::vector::{dist2, nnz, norm2, DenseVector, SupportSet};

/// Factor of the classical triangle-inequality bound `‖H_k(b) − a‖ ≤ 2‖b − a‖`.
pub const LEGACY_FACTOR: f64 = 2.0;

/// `(3 + √5) / 2`, the largest value ν takes (at ρ = 1).
pub const NU_MAX: f64 = 2.618_033_988_749_895;

/// Orders indices by decreasing magnitude, ties going to the smaller index.
#[inline]
fn magnitude_order(v: &[f64], a: usize, b: usize) -> Ordering {
    v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b))
}

/// Reusable scratch space for thresholding inside solver loops.
#[derive(Debug, Default, Clone)]
pub struct Thresholder {
    order: Vec<usize>,
}

impl Thresholder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps the `k` largest-magnitude entries of `v` in place, zeroing the rest.
    pub fn apply(&mut self, v: &mut [f64], k: usize) {
        if k >= v.len() || nnz(v) <= k {
            return;
        }
        if k == 0 {
            v.iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        self.select(v, k);
        for &j in &self.order[k..] {
            v[j] = 0.0;
        }
    }

    /// Indices of the `k` largest-magnitude entries in increasing index order.
    pub fn top_k(&mut self, v: &[f64], k: usize) -> Vec<usize> {
        let k = k.min(v.len());
        if k == 0 {
            return Vec::new();
        }
        self.select(v, k);
        let mut top = self.order[..k].to_vec();
        top.sort_unstable();
        top
    }

    fn select(&mut self, v: &[f64], k: usize) {
        self.order.clear();
        self.order.extend(0..v.len());
        if k < v.len() {
            self.order
                .select_nth_unstable_by(k - 1, |&a, &b| magnitude_order(v, a, b));
        }
    }
}

/// `H_k(v)`: keeps the k largest absolute entries (smallest index wins ties).
pub fn hard_threshold(v: &DenseVector, k: usize) -> Result<DenseVector> {
    if k > v.len() {
        return invalid(format!("sparsity {k} exceeds dimension {}", v.len()));
    }
    let mut out = v.as_slice().to_vec();
    Thresholder::new().apply(&mut out, k);
    DenseVector::new(out)
}

/// Indices of the k largest-magnitude entries, in increasing order.
pub fn top_k_indices(v: &[f64], k: usize) -> Vec<usize> {
    Thresholder::new().top_k(v, k)
}

/// Orthogonal projection onto the coordinates in `omega`.
pub fn project_support(v: &DenseVector, omega: &SupportSet) -> Result<DenseVector> {
    if omega.dimension() != v.len() {
        return invalid(format!(
            "support dimension {} does not match vector length {}",
            omega.dimension(),
            v.len()
        ));
    }
    let mut out = vec![0.0; v.len()];
    for &i in omega.indices() {
        out[i] = v.as_slice()[i];
    }
    DenseVector::new(out)
}

/// Projection onto the ℓ₂ ball of radius `radius`: `v / max{1, ‖v‖/radius}`.
pub fn project_l2_ball(v: &DenseVector, radius: f64) -> Result<DenseVector> {
    if radius.is_nan() || radius <= 0.0 {
        return invalid(format!("ball radius must be positive, got {radius}"));
    }
    let mut out = v.as_slice().to_vec();
    project_l2_ball_in_place(&mut out, radius);
    DenseVector::new(out)
}

/// In-place ball projection; an infinite radius is a no-op.
pub fn project_l2_ball_in_place(v: &mut [f64], radius: f64) {
    if radius.is_infinite() {
        return;
    }
    let norm = norm2(v);
    if norm > radius {
        let scale = radius / norm;
        v.iter_mut().for_each(|x| *x *= scale);
    }
}

/// ν as a function of ρ.
pub fn nu_from_rho(rho: f64) -> f64 {
    1.0 + (rho + ((4.0 + rho) * rho).sqrt()) / 2.0
}

/// Inverse of [`nu_from_rho`]: `ρ = (ν − 1)² / ν`.
pub fn rho_for_nu(nu: f64) -> Result<f64> {
    if nu.is_nan() || nu <= 1.0 {
        return invalid(format!("nu must exceed 1, got {nu}"));
    }
    Ok((nu - 1.0) * (nu - 1.0) / nu)
}

/// ρ, ν and the comparison factors for one `(k, K, d[, s])` configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub k: usize,
    #[serde(rename = "K")]
    pub big_k: usize,
    pub d: usize,
    pub s: Option<usize>,
    pub rho: f64,
    pub nu: f64,
    pub sqrt_nu: f64,
    pub legacy_factor: f64,
    /// `1 + √((d−k)/(d−K))`, the triangle-inequality bound built on the
    /// best-approximation residual estimate.
    pub jain_factor: f64,
}

/// Computes the tight deviation bound for projection sparsity `k`, target
/// sparsity `big_k`, dimension `d` and, optionally, input sparsity `s`.
pub fn deviation_bound(k: usize, big_k: usize, d: usize, s: Option<usize>) -> Result<BoundSummary> {
    if d == 0 {
        return invalid("dimension must be at least 1");
    }
    if big_k > k {
        return invalid(format!("target sparsity K={big_k} exceeds projection sparsity k={k}"));
    }
    if k > d {
        return invalid(format!("projection sparsity k={k} exceeds dimension d={d}"));
    }
    if let Some(s) = s {
        if s < big_k || s > d {
            return invalid(format!("input sparsity s={s} must lie in [K, d] = [{big_k}, {d}]"));
        }
    }
    // Off-support slots that can hold mass of the K-sparse partner.
    let slots = match s {
        Some(s) if s <= k => 0,
        Some(s) => big_k.min(s - k),
        None => big_k.min(d - k),
    };
    let rho = if slots == 0 {
        0.0
    } else {
        slots as f64 / (k - big_k + slots) as f64
    };
    let nu = nu_from_rho(rho);
    let jain_factor = if d == big_k {
        1.0
    } else {
        1.0 + ((d - k) as f64 / (d - big_k) as f64).sqrt()
    };
    Ok(BoundSummary {
        k,
        big_k,
        d,
        s,
        rho,
        nu,
        sqrt_nu: nu.sqrt(),
        legacy_factor: LEGACY_FACTOR,
        jain_factor,
    })
}

/// `‖H_k(b) − a‖² / ‖b − a‖²`, or `None` when `b = a`.
pub fn deviation_ratio(b: &[f64], a: &[f64], k: usize) -> Option<f64> {
    let den = dist2(b, a);
    if den == 0.0 {
        return None;
    }
    let mut w = b.to_vec();
    Thresholder::new().apply(&mut w, k);
    let num = dist2(&w, a);
    Some((num / den) * (num / den))
}

/// A pair `(b, a)` attaining the bound with equality, for `K < d − k`.
///
/// `b` has `k + K` unit entries (the first `k` survive thresholding), and `a`
/// sits on the next `K` coordinates at height `ν / (ν − 1)`.
pub fn tightness_witness(k: usize, big_k: usize, d: usize) -> Result<(DenseVector, DenseVector)> {
    if big_k == 0 || big_k > k {
        return invalid(format!("witness needs 1 ≤ K ≤ k, got K={big_k}, k={k}"));
    }
    if k > d || big_k >= d - k {
        return Err(Error::UnsupportedRegime(format!(
            "witness construction requires K < d − k (K={big_k}, k={k}, d={d})"
        )));
    }
    let nu = deviation_bound(k, big_k, d, None)?.nu;
    let mut b = vec![0.0; d];
    let mut a = vec![0.0; d];
    b[..k + big_k].iter_mut().for_each(|x| *x = 1.0);
    a[k..k + big_k].iter_mut().for_each(|x| *x = nu / (nu - 1.0));
    Ok((DenseVector::new(b)?, DenseVector::new(a)?))
}

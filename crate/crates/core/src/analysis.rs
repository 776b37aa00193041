//! Closed-form recovery conditions and convergence coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A threshold value, capped at 1 when the raw formula exceeds it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub raw: f64,
    pub capped: bool,
}

impl Threshold {
    fn capped_at_one(raw: f64) -> Self {
        Self {
            value: raw.min(1.0),
            raw,
            capped: raw > 1.0,
        }
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if !(nu >= 1.0) || !nu.is_finite() {
        return invalid(format!("ν must be a finite value ≥ 1, got {nu}"));
    }
    Ok(())
}

/// IHT recovers when `δ_{2k+K} ≤ 1/√(8ν)`.
pub fn rip_threshold_iht(nu: f64) -> Result<Threshold> {
    check_nu(nu)?;
    Ok(Threshold::capped_at_one(1.0 / (8.0 * nu).sqrt()))
}

/// CoSaMP recovers when `δ_{3k+K} ≤ (√(32ν+49) − 9)^{1/2} / (4√(ν−1))`.
///
/// As `ν → 1⁺` the expression tends to `1/3`.
pub fn rip_threshold_cosamp(nu: f64) -> Result<Threshold> {
    check_nu(nu)?;
    if nu <= 1.0 {
        return invalid("the CoSaMP condition needs ν > 1");
    }
    // (√(32ν+49) − 9) = 32(ν−1)/(√(32ν+49) + 9) avoids cancellation near ν = 1.
    let num = 32.0 * (nu - 1.0) / ((32.0 * nu + 49.0).sqrt() + 9.0);
    Ok(Threshold::capped_at_one(num.sqrt() / (4.0 * (nu - 1.0).sqrt())))
}

/// GraSP recovers when `μ_{3k+K} ≤ 1 + ((√ν + 1)^{1/2} − 1)/√ν`.
pub fn srh_threshold_grasp(nu: f64) -> Result<f64> {
    check_nu(nu)?;
    let s = nu.sqrt();
    Ok(1.0 + ((s + 1.0).sqrt() - 1.0) / s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `ν > 1/(1 − ηα)`.
    Case1,
    /// `ν ≤ 1/(1 − ηα)`.
    Case2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrgParams {
    pub eta: f64,
    pub alpha: f64,
    #[serde(rename = "L")]
    pub l: f64,
    /// Update frequency; real-valued so that non-integer frequencies can be inspected.
    pub m: f64,
    pub nu: f64,
    pub omega: f64,
    #[serde(rename = "T")]
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCoefficients {
    pub regime: Regime,
    pub beta: f64,
    pub tau: f64,
    pub kappa: f64,
    /// `η < 1/(4L)`, `ν < 4L/(4L − α)` and `β < 1`.
    pub feasible: bool,
}

/// Stage contraction `β`, residual `τ` and `κ` of HT-SVRG.
pub fn svrg_coefficients(p: &SvrgParams) -> Result<ConvergenceCoefficients> {
    let SvrgParams {
        eta,
        alpha,
        l,
        m,
        nu,
        omega,
        t,
    } = *p;
    for (name, v) in [("η", eta), ("α", alpha), ("L", l), ("m", m), ("ν", nu)] {
        if !(v > 0.0) || !v.is_finite() {
            return invalid(format!("{name} must be positive and finite, got {v}"));
        }
    }
    if !(omega > 0.0) || !(t >= 0.0) {
        return invalid(format!("need ω > 0 and T ≥ 0, got ω={omega}, T={t}"));
    }
    if alpha > l {
        return invalid(format!("need α ≤ L, got α={alpha}, L={l}"));
    }
    let ea = eta * alpha;
    let kappa = if t == 0.0 {
        0.0
    } else {
        4.0 * nu * eta * eta * t * (2.0 * l * omega + t) * m + 2.0 * t * omega / alpha
    };
    let (regime, beta, tau) = if ea < 1.0 && nu > 1.0 / (1.0 - ea) {
        let den = 2.0 * nu * ea - 2.0 * nu * eta * ea * l - nu + 1.0;
        let beta = 1.0 / (den * m) + 2.0 * nu * eta * ea * l / den;
        let tau = alpha * kappa / (2.0 * den * (1.0 - beta) * m);
        (Regime::Case1, beta, tau)
    } else {
        let den = nu * ea * (1.0 - 2.0 * eta * l);
        let beta = 1.0 / (den * m) + 2.0 * eta * l / (1.0 - 2.0 * eta * l);
        let tau = kappa / (2.0 * den * (1.0 - beta) * m);
        (Regime::Case2, beta, tau)
    };
    let feasible = eta < 1.0 / (4.0 * l) && nu < 4.0 * l / (4.0 * l - alpha) && beta < 1.0 && beta > 0.0;
    Ok(ConvergenceCoefficients {
        regime,
        beta,
        tau: if kappa == 0.0 { 0.0 } else { tau },
        kappa,
        feasible,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalNu {
    pub nu: f64,
    /// Matching `k/K = (1 − ηα)/(ηα)²`.
    pub k_over_big_k: f64,
}

/// `ν = 1/(1 − ηα)`, the contraction-minimizing choice.
pub fn optimal_nu(eta: f64, alpha: f64) -> Result<OptimalNu> {
    let ea = eta * alpha;
    if !(ea > 0.0 && ea < 1.0) {
        return invalid(format!("need 0 < ηα < 1, got {ea}"));
    }
    Ok(OptimalNu {
        nu: 1.0 / (1.0 - ea),
        k_over_big_k: (1.0 - ea) / (ea * ea),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateFrequency {
    /// `1/(νηα(1 − 4ηL))`.
    pub bound: f64,
    /// Smallest integer strictly above `bound`; `u64::MAX` on overflow.
    pub m: u64,
    pub overflow: bool,
}

/// Smallest `m` with `m > 1/(νηα(1 − 4ηL))`.
///
/// A relative slack of 1e-12 absorbs rounding, so a bound that is an
/// integer up to rounding still moves to the next integer.
pub fn min_update_frequency(eta: f64, alpha: f64, l: f64, nu: f64) -> Result<UpdateFrequency> {
    for (name, v) in [("η", eta), ("α", alpha), ("L", l), ("ν", nu)] {
        if !(v > 0.0) || !v.is_finite() {
            return invalid(format!("{name} must be positive and finite, got {v}"));
        }
    }
    if eta * l >= 0.25 {
        return invalid(format!("need η < 1/(4L), got ηL = {}", eta * l));
    }
    let bound = 1.0 / (nu * eta * alpha * (1.0 - 4.0 * eta * l));
    let next = (bound * (1.0 + 1e-12)).floor() + 1.0;
    if !next.is_finite() || next >= u64::MAX as f64 {
        return Ok(UpdateFrequency {
            bound,
            m: u64::MAX,
            overflow: true,
        });
    }
    Ok(UpdateFrequency {
        bound,
        m: next as u64,
        overflow: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSize {
    pub n: u64,
    /// `r = d`: the log factor vanishes and the formula says nothing.
    pub degenerate: bool,
}

/// `n = ⌈C₀ δ⁻² r ln(d/r)⌉`. `C₀` is unknown in general; results are only
/// meaningful relative to each other for a fixed `C₀`.
pub fn sample_size_rip(delta: f64, r: usize, d: usize, c0: f64) -> Result<SampleSize> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("need 0 < δ < 1, got {delta}"));
    }
    if r == 0 || r > d {
        return invalid(format!("need 1 ≤ r ≤ d, got r={r}, d={d}"));
    }
    if !(c0 > 0.0) || !c0.is_finite() {
        return invalid(format!("C₀ must be positive, got {c0}"));
    }
    let raw = c0 * r as f64 * (d as f64 / r as f64).ln() / (delta * delta);
    Ok(SampleSize {
        n: raw.ceil() as u64,
        degenerate: r == d,
    })
}

//! Time-uniform confidence sequences for the running-average effect.
//!
//! The boundary comes from a Gaussian mixture over the martingale
//! `Σ (ψ̂_j − ψ_j)` with mixing variance `η²`. All logarithms are natural.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::AiceEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsInterval {
    /// Number of blocks covered.
    pub k: usize,
    /// Martingale steps entering the width (blocks, or pairs).
    pub steps: usize,
    pub center: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
    pub excludes_null: bool,
}

impl CsInterval {
    pub fn new(k: usize, steps: usize, center: f64, half_width: f64) -> Self {
        let lower = center - half_width;
        let upper = center + half_width;
        CsInterval {
            k,
            steps,
            center,
            half_width,
            lower,
            upper,
            excludes_null: 0.0 < lower || 0.0 > upper,
        }
    }

    /// Closed-interval membership.
    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Half-width of the interval after `k` steps with cumulative variance
/// proxy `s`.
pub fn cs_half_width(s: f64, k: usize, eta: f64, alpha: f64) -> f64 {
    debug_assert!(s >= 0.0 && k >= 1 && eta > 0.0 && alpha > 0.0 && alpha < 1.0);
    let eta2 = eta * eta;
    let v = eta2 * s + 1.0;
    (v / eta2 * (v / (alpha * alpha)).ln()).sqrt() / k as f64
}

pub fn cs_interval(estimate: &AiceEstimate, alpha: f64, eta: f64) -> CsInterval {
    let half = cs_half_width(estimate.variance_proxy, estimate.effective_steps, eta, alpha);
    CsInterval::new(estimate.k, estimate.effective_steps, estimate.point, half)
}

/// True iff `null_value` lies strictly outside the interval.
pub fn stopping_check(interval: &CsInterval, null_value: f64) -> bool {
    !interval.covers(null_value)
}

/// The width in terms of `u = η²S`, up to the factor `sqrt(S)/k`.
fn shape(u: f64, alpha: f64) -> f64 {
    (1.0 + 1.0 / u) * ((1.0 + u) / (alpha * alpha)).ln()
}

/// Mixing parameter that minimizes the width at `k_star` steps when each
/// step contributes `sigma2_per_step` to the variance proxy.
pub fn tune_eta(k_star: usize, sigma2_per_step: f64, alpha: f64) -> f64 {
    // Golden-section search for the minimizer of `shape` over ln u. The
    // shape function is unimodal: it diverges at both ends.
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let f = |x: f64| shape(x.exp(), alpha);
    let (mut a, mut b) = (-30.0f64, 30.0f64);
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    let u = (0.5 * (a + b)).exp();
    (u / (k_star as f64 * sigma2_per_step)).sqrt()
}

/// Value of the Gaussian mixture martingale with partial sum `z` and
/// cumulative variance `s`.
pub fn mixture_martingale(z: f64, s: f64, eta: f64) -> f64 {
    let v = eta * eta * s + 1.0;
    (eta * eta * z * z / (2.0 * v)).exp() / v.sqrt()
}

/// Simulates one mixture-martingale path driven by standard normal
/// increments with unit variance. The returned path starts at 1.
pub fn simulate_mixture_path<R: Rng + ?Sized>(steps: usize, eta: f64, rng: &mut R) -> Vec<f64> {
    let mut path = Vec::with_capacity(steps + 1);
    path.push(1.0);
    let mut z = 0.0;
    for j in 1..=steps {
        z += rng.sample::<f64, _>(StandardNormal);
        path.push(mixture_martingale(z, j as f64, eta));
    }
    path
}

/// Fraction of paths that ever reach `1/alpha`.
pub fn ville_crossing_test(paths: &[Vec<f64>], alpha: f64) -> Result<f64> {
    if paths.is_empty() {
        return Err(Error::InsufficientData("no paths".into()));
    }
    let threshold = 1.0 / alpha;
    let mut crossed = 0usize;
    for (index, path) in paths.iter().enumerate() {
        if path.first() != Some(&1.0) {
            return Err(Error::InvalidPath { index, reason: "path must start at 1".into() });
        }
        if let Some(bad) = path.iter().find(|m| m.is_nan() || **m < 0.0) {
            return Err(Error::InvalidPath { index, reason: format!("value {bad} is negative or NaN") });
        }
        if path.iter().any(|&m| m >= threshold) {
            crossed += 1;
        }
    }
    Ok(crossed as f64 / paths.len() as f64)
}

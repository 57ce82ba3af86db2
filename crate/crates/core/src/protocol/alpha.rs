//! Confidence-width multipliers.

use crate::error::{Error, Result};

/// `alpha = min(sqrt(2 log(2MKH/delta)), sqrt(c + d log(k e)))` with
/// `c = 2 log(KH/delta)` and `k` the smallest `k >= 1` satisfying
/// `k d >= c + d log(k e)`.
pub fn compute_alpha(m: usize, k: usize, h: usize, d: usize, delta: f64) -> Result<f64> {
    check(m, k, h, d, delta)?;
    let c = 2.0 * ((k * h) as f64 / delta).ln();
    Ok(min_branch(m, k, h, d, delta, c))
}

/// Shared-parameter multiplier: the dimension-dependent branch unions over
/// phases only, so `log(KH/delta)` becomes `log(H/delta)`.
pub fn compute_alpha_shared(m: usize, k: usize, h: usize, d: usize, delta: f64) -> Result<f64> {
    check(m, k, h, d, delta)?;
    let c = 2.0 * (h as f64 / delta).ln();
    Ok(min_branch(m, k, h, d, delta, c))
}

/// Per-arm multiplier of the enhanced variant,
/// `sqrt(log(M^3 K sigma_bar^2 / (d delta^2)))`.
pub fn enhanced_alpha(m: usize, k: usize, d: usize, delta: f64, sigma_bar: f64) -> f64 {
    let (mf, kf, df) = (m as f64, k as f64, d as f64);
    (mf.powi(3) * kf * sigma_bar * sigma_bar / (df * delta * delta)).ln().max(0.0).sqrt()
}

fn check(m: usize, k: usize, h: usize, d: usize, delta: f64) -> Result<()> {
    if m == 0 || k == 0 || h == 0 || d == 0 {
        return Err(Error::InvalidConfig("M, K, H and d must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

fn min_branch(m: usize, k: usize, h: usize, d: usize, delta: f64, c: f64) -> f64 {
    let union = (2.0 * (2.0 * (m * k * h) as f64 / delta).ln()).sqrt();
    let df = d as f64;
    let kk = k_fixed_point(c, df);
    let dimensional = (c + df * (kk * std::f64::consts::E).ln()).sqrt();
    union.min(dimensional)
}

/// Iterates `k <- max(1, c/d + 1 + log k)` from `k = 1`. The map is a
/// contraction on `k >= 1`, so this converges to the smallest admissible `k`.
pub(crate) fn k_fixed_point(c: f64, d: f64) -> f64 {
    let mut k = 1.0_f64;
    for _ in 0..10_000 {
        let next = (c / d + 1.0 + k.ln()).max(1.0);
        if (next - k).abs() <= 1e-10 * next {
            return next;
        }
        k = next;
    }
    k
}

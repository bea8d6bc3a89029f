//! Prior effective sample sizes.

use serde::{Deserialize, Serialize};

use crate::error::{LapError, Result};
use crate::math::roots::golden_min;
use crate::math::special::gamma_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    /// The shape, read as the effective sample size.
    pub shape: f64,
    pub rate: f64,
    /// Root mean squared quantile residual.
    pub residual: f64,
}

/// Least-squares gamma fit to `(p, value)` quantile pairs of a rate
/// posterior. For a fixed shape the best rate is closed form, so only the
/// shape is searched.
pub fn estimate_ess_gamma(pairs: &[(f64, f64)]) -> Result<GammaFit> {
    let mut pts = pairs.to_vec();
    for &(p, v) in &pts {
        if !(p > 0.0 && p < 1.0) || !(v > 0.0 && v.is_finite()) {
            return Err(LapError::domain(format!("pair ({p}, {v}) needs p in (0, 1) and a positive value")));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    if pts.len() < 2 {
        return Err(LapError::domain("at least two distinct quantile pairs are needed"));
    }
    if pts.windows(2).any(|w| w[1].0 == w[0].0 || w[1].1 <= w[0].1) {
        return Err(LapError::Ordering("quantile values must increase strictly with probability".into()));
    }
    // inverse rate s = 1 / rate minimizing sum (v - s g)^2
    let profile = |la: f64| -> (f64, f64) {
        let a = la.exp();
        let g: Vec<f64> = pts.iter().map(|&(p, _)| gamma_quantile(p, a)).collect();
        let num: f64 = g.iter().zip(&pts).map(|(gi, &(_, v))| gi * v).sum();
        let den: f64 = g.iter().map(|gi| gi * gi).sum();
        let s = num / den;
        let sse = g.iter().zip(&pts).map(|(gi, &(_, v))| (v - s * gi).powi(2)).sum::<f64>();
        (sse, s)
    };
    let (lo, hi) = (-7.0_f64, 14.0_f64);
    let n = 211usize;
    let step = (hi - lo) / (n - 1) as f64;
    let mut best = 0usize;
    let mut best_val = f64::INFINITY;
    for i in 0..n {
        let v = profile(lo + step * i as f64).0;
        if v < best_val {
            best_val = v;
            best = i;
        }
    }
    let a = lo + step * best.saturating_sub(1) as f64;
    let b = lo + step * (best + 1).min(n - 1) as f64;
    // relative error on the quantile scale keeps the objective well conditioned
    let scale: f64 = pts.iter().map(|p| p.1 * p.1).sum();
    let la = golden_min(|x| profile(x).0 / scale, a, b, 1e-12);
    let (sse, s) = profile(la);
    Ok(GammaFit { shape: la.exp(), rate: 1.0 / s, residual: (sse / pts.len() as f64).sqrt() })
}

/// Expert sample size whose precision matches `sd_expert`, given that
/// `n_data` observations give posterior sd `sd_post_data`.
pub fn regression_ess_heuristic(sd_post_data: f64, n_data: f64, sd_expert: f64) -> Result<f64> {
    for (n, v) in [("sd_post_data", sd_post_data), ("n_data", n_data), ("sd_expert", sd_expert)] {
        if !(v > 0.0) || v.is_nan() {
            return Err(LapError::domain(format!("{n} must be positive (got {v})")));
        }
    }
    Ok(n_data * (sd_post_data / sd_expert).powi(2))
}

/// Number of answers the multivariate normal protocol asks for:
/// `k(k-1)/2` concordances, two quantiles per margin, and `n_e`.
pub fn elicitation_count(k: usize) -> usize {
    k * k.saturating_sub(1) / 2 + 2 * k + 1
}

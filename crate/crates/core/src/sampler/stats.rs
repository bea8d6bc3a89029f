//! Empirical quantiles, distribution-matching checks and kernel density grids.

use serde::Serialize;

use crate::error::{LapError, Result};
use crate::math::dist::DistributionSpec;

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn quantiles(xs: &[f64], probs: &[f64]) -> Vec<f64> {
    let s = sorted(xs);
    probs.iter().map(|&p| quantile_sorted(&s, p)).collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with `n - 1` denominator.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileDeviation {
    pub p: f64,
    pub empirical: f64,
    pub reference: f64,
    pub deviation: f64,
    /// The reference quantile was zero, so `deviation` is absolute.
    pub absolute: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileMatch {
    pub max_deviation: f64,
    pub details: Vec<QuantileDeviation>,
}

/// Largest relative gap between empirical and reference quantiles.
pub fn quantile_match(draws: &[f64], reference: &DistributionSpec, probs: &[f64]) -> Result<QuantileMatch> {
    if draws.len() < 1000 {
        return Err(LapError::domain(format!(
            "quantile_match needs at least 1000 draws (got {})",
            draws.len()
        )));
    }
    let s = sorted(draws);
    let mut details = Vec::with_capacity(probs.len());
    for &p in probs {
        let empirical = quantile_sorted(&s, p);
        let reference = reference.quantile(p)?;
        let absolute = reference == 0.0;
        let gap = (empirical - reference).abs();
        let deviation = if absolute { gap } else { gap / reference.abs() };
        details.push(QuantileDeviation { p, empirical, reference, deviation, absolute });
    }
    let max_deviation = details.iter().map(|d| d.deviation).fold(0.0, f64::max);
    Ok(QuantileMatch { max_deviation, details })
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `draws` and `cdf`.
pub fn ks_statistic(draws: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let s = sorted(draws);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityGrid {
    pub x: Vec<f64>,
    pub pdf: Vec<f64>,
    pub bandwidth: f64,
}

pub const KDE_POINTS: usize = 512;

/// Silverman's rule of thumb, `0.9 min(sd, IQR / 1.34) n^(-1/5)`.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let s = sorted(xs);
    let sd = variance(xs).sqrt();
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (xs.len() as f64).powf(-0.2);
    if h > 0.0 {
        h
    } else {
        1e-8_f64.max(s[0].abs() * 1e-8)
    }
}

/// Gaussian kernel density estimate on an even grid spanning the data
/// plus three bandwidths either side.
pub fn kde_grid(xs: &[f64], n_points: usize) -> Result<DensityGrid> {
    if xs.len() < 2 || xs.iter().any(|x| !x.is_finite()) {
        return Err(LapError::domain("density estimate needs at least two finite draws"));
    }
    let h = silverman_bandwidth(xs);
    let s = sorted(xs);
    let lo = s[0] - 3.0 * h;
    let hi = s[s.len() - 1] + 3.0 * h;
    let step = (hi - lo) / (n_points - 1) as f64;
    let x: Vec<f64> = (0..n_points).map(|i| lo + step * i as f64).collect();
    let pdf = kde_sorted(&s, &x, h);
    Ok(DensityGrid { x, pdf, bandwidth: h })
}

/// Gaussian kernel density of `xs` at `points` with Silverman's bandwidth.
pub fn kde_at(xs: &[f64], points: &[f64]) -> Result<Vec<f64>> {
    if xs.len() < 2 || xs.iter().any(|x| !x.is_finite()) {
        return Err(LapError::domain("density estimate needs at least two finite draws"));
    }
    Ok(kde_sorted(&sorted(xs), points, silverman_bandwidth(xs)))
}

fn kde_sorted(s: &[f64], points: &[f64], h: f64) -> Vec<f64> {
    let norm = 1.0 / (s.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    points
        .iter()
        .map(|&g| {
            // draws beyond 8 bandwidths contribute nothing measurable
            let a = s.partition_point(|&v| v < g - 8.0 * h);
            let b = s.partition_point(|&v| v <= g + 8.0 * h);
            s[a..b].iter().map(|&v| (-0.5 * ((g - v) / h).powi(2)).exp()).sum::<f64>() * norm
        })
        .collect()
}

/// Quantile of a density grid by trapezoid integration.
pub fn grid_quantile(grid: &DensityGrid, p: f64) -> f64 {
    let mut cdf = vec![0.0; grid.x.len()];
    for i in 1..grid.x.len() {
        cdf[i] = cdf[i - 1] + 0.5 * (grid.pdf[i] + grid.pdf[i - 1]) * (grid.x[i] - grid.x[i - 1]);
    }
    let total = cdf[cdf.len() - 1];
    let target = p * total;
    let i = cdf.partition_point(|&c| c < target).clamp(1, cdf.len() - 1);
    let (c0, c1) = (cdf[i - 1], cdf[i]);
    let w = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
    grid.x[i - 1] + w * (grid.x[i] - grid.x[i - 1])
}

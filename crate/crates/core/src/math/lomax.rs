//! Lomax (Pareto type II): the prior predictive of an exponential sampling
//! model under a Gamma(α, β) prior on the rate.

use crate::error::{LapError, Result};

fn check(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
        return Err(LapError::domain(format!(
            "lomax requires alpha > 0 and beta > 0 (got alpha={alpha}, beta={beta})"
        )));
    }
    Ok(())
}

/// `F(x) = 1 - (β / (x + β))^α`.
pub fn lomax_cdf(x: f64, alpha: f64, beta: f64) -> Result<f64> {
    check(alpha, beta)?;
    if x.is_nan() || x < 0.0 {
        return Err(LapError::domain(format!("lomax support is x >= 0 (got {x})")));
    }
    // 1 - exp(-α·log1p(x/β)) without cancellation near 0
    Ok(-(-alpha * (x / beta).ln_1p()).exp_m1())
}

/// `Q(p) = β((1 - p)^{-1/α} - 1)`.
pub fn lomax_quantile(p: f64, alpha: f64, beta: f64) -> Result<f64> {
    check(alpha, beta)?;
    if !(0.0..1.0).contains(&p) {
        return Err(LapError::domain(format!("probability must be in [0, 1) (got {p})")));
    }
    Ok(beta * (-(-p).ln_1p() / alpha).exp_m1())
}

pub(crate) fn lomax_ln_pdf(x: f64, alpha: f64, beta: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    alpha.ln() - beta.ln() - (alpha + 1.0) * (x / beta).ln_1p()
}

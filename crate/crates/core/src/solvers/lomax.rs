//! Lomax prior-predictive tertiles for the exponential-gamma model.

use serde::{Deserialize, Serialize};

use crate::error::{LapError, Result};
use crate::math::lomax::lomax_cdf;

/// Expert's Q(1/3) and Q(2/3) of survival time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TertileAnswer {
    pub q13: f64,
    pub q23: f64,
}

/// `ln 3 / ln 1.5`: the tertile ratio of every Lomax exceeds this.
pub fn lomax_ratio_bound() -> f64 {
    3f64.ln() / 1.5f64.ln()
}

/// `Q(2/3) / Q(1/3)` for shape `alpha`; decreasing in `alpha`.
pub fn tertile_ratio(alpha: f64) -> f64 {
    (3f64.ln() / alpha).exp_m1() / (1.5f64.ln() / alpha).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LomaxFit {
    pub alpha: f64,
    pub beta: f64,
}

pub fn solve_lomax_tertiles(ans: TertileAnswer) -> Result<LomaxFit> {
    let TertileAnswer { q13, q23 } = ans;
    if !(q13 > 0.0) || !q23.is_finite() {
        return Err(LapError::domain("tertiles must be positive and finite"));
    }
    if q23 <= q13 {
        return Err(LapError::Ordering(format!("Q(2/3) = {q23} must exceed Q(1/3) = {q13}")));
    }
    let ratio = q23 / q13;
    let bound = lomax_ratio_bound();
    if ratio <= bound {
        return Err(LapError::Infeasible(format!(
            "Q(2/3)/Q(1/3) = {ratio:.6} must exceed ln 3 / ln 1.5 = {bound:.6} for a Lomax prior predictive"
        )));
    }
    // bracket in log(alpha): the ratio falls from infinity to the bound
    let f = |la: f64| tertile_ratio(la.exp()) - ratio;
    let mut lo = -5.0_f64;
    while f(lo) <= 0.0 {
        lo -= 5.0;
        if lo < -700.0 {
            return Err(LapError::Numerical("could not bracket the Lomax shape".into()));
        }
    }
    let mut hi = 1.0_f64;
    while f(hi) > 0.0 {
        hi += 2.0;
        if hi > 700.0 {
            return Err(LapError::Numerical("Lomax shape exceeds the representable range".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    let alpha = (0.5 * (lo + hi)).exp();
    let beta = q13 / (1.5f64.ln() / alpha).exp_m1();
    Ok(LomaxFit { alpha, beta })
}

/// Lomax scale giving median `median` at shape `alpha`.
pub fn lomax_beta_for_median(alpha: f64, median: f64) -> Result<f64> {
    if !(alpha > 0.0 && median > 0.0) {
        return Err(LapError::domain("alpha and median must be positive"));
    }
    Ok(median / (std::f64::consts::LN_2 / alpha).exp_m1())
}

/// Tertiles of the Lomax with shape `alpha` and the given median.
pub fn ess_to_tertiles(alpha: f64, median: f64) -> Result<TertileAnswer> {
    let beta = lomax_beta_for_median(alpha, median)?;
    Ok(TertileAnswer {
        q13: beta * (1.5f64.ln() / alpha).exp_m1(),
        q23: beta * (3f64.ln() / alpha).exp_m1(),
    })
}

/// Residuals of the two tertile equations.
pub fn tertile_residuals(fit: LomaxFit, ans: TertileAnswer) -> Result<(f64, f64)> {
    Ok((
        lomax_cdf(ans.q13, fit.alpha, fit.beta)? - 1.0 / 3.0,
        lomax_cdf(ans.q23, fit.alpha, fit.beta)? - 2.0 / 3.0,
    ))
}

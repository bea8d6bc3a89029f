//! Inverse-gamma data augmentation prior for mean survival.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{LapError, Result};
use crate::math::roots::bisect;
use crate::math::special::{gamma_p, gamma_quantile};

/// Probability `tau` that the surviving fraction at time `t` exceeds `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalProbAnswer {
    pub t: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Fixed prior sample size, for the one-answer protocol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DapFit {
    pub alpha: f64,
    pub ytilde: f64,
    /// Reproduced minus elicited `tau`, one per answer.
    pub residuals: Vec<f64>,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(LapError::domain(format!("{name} must be positive (got {v})")))
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(LapError::domain(format!("{name} must be in (0, 1) (got {v})")))
    }
}

/// `P(G < -alpha ytilde log(gamma) / t)` with `G ~ Gamma(alpha, 1)`.
pub fn dap_survival_prob(alpha: f64, ytilde: f64, t: f64, gamma: f64) -> Result<f64> {
    check_positive("alpha", alpha)?;
    check_positive("ytilde", ytilde)?;
    check_positive("t", t)?;
    check_unit("gamma", gamma)?;
    Ok(gamma_p(alpha, -alpha * ytilde * gamma.ln() / t))
}

fn validate(a: &SurvivalProbAnswer) -> Result<()> {
    check_positive("t", a.t)?;
    check_unit("gamma", a.gamma)?;
    check_unit("tau", a.tau)
}

/// `ytilde` implied by one answer at shape `alpha`.
fn ytilde_for(a: &SurvivalProbAnswer, alpha: f64) -> f64 {
    gamma_quantile(a.tau, alpha) * a.t / (-alpha * a.gamma.ln())
}

/// Hyperparameters `(alpha, ytilde)` from one answer with fixed `alpha`, or
/// from two answers. The two-answer system reduces to one equation in
/// `alpha`: both answers must imply the same `ytilde`.
pub fn solve_dap(answers: &[SurvivalProbAnswer]) -> Result<DapFit> {
    for a in answers {
        validate(a)?;
    }
    let (alpha, ytilde) = match answers {
        [a] => {
            let alpha = a.alpha.ok_or_else(|| {
                LapError::Config("a single answer needs a fixed alpha (prior sample size)".into())
            })?;
            check_positive("alpha", alpha)?;
            (alpha, ytilde_for(a, alpha))
        }
        [a, b] => {
            let h = |la: f64| {
                let alpha = la.exp();
                ytilde_for(a, alpha).ln() - ytilde_for(b, alpha).ln()
            };
            let grid: Vec<f64> = (0..=240).map(|i| -6.0 + i as f64 * 0.1).collect();
            let vals: Vec<f64> = grid.iter().map(|&x| h(x)).collect();
            let bracket = (1..grid.len()).find(|&i| vals[i - 1].is_finite() && vals[i].is_finite() && vals[i - 1] * vals[i] <= 0.0);
            let Some(i) = bracket else {
                let residuals = vals.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, |m, v| m.min(v.abs()));
                return Err(LapError::Inconsistent {
                    message: "no alpha > 0 makes both answers imply the same mean survival".into(),
                    residuals: vec![residuals],
                });
            };
            let la = bisect(h, grid[i - 1], grid[i], 1e-14).ok_or_else(|| {
                LapError::Numerical("bisection failed for the DAP shape".into())
            })?;
            let alpha = la.exp();
            (alpha, 0.5 * (ytilde_for(a, alpha) + ytilde_for(b, alpha)))
        }
        _ => return Err(LapError::Config(format!("expected one or two answers, got {}", answers.len()))),
    };
    let residuals = answers
        .iter()
        .map(|a| dap_survival_prob(alpha, ytilde, a.t, a.gamma).map(|tau| tau - a.tau))
        .collect::<Result<Vec<f64>>>()?;
    if residuals.iter().any(|r| r.abs() > 1e-6) {
        return Err(LapError::Inconsistent {
            message: "solution does not reproduce the elicited probabilities".into(),
            residuals,
        });
    }
    Ok(DapFit { alpha, ytilde, residuals })
}

/// Quantile `p` of median survival `log 2 * psi` with `psi ~ IG(alpha, alpha ytilde)`.
pub fn dap_median_survival_quantile(alpha: f64, ytilde: f64, p: f64) -> Result<f64> {
    check_positive("alpha", alpha)?;
    check_positive("ytilde", ytilde)?;
    check_unit("p", p)?;
    Ok(LN_2 * alpha * ytilde / gamma_quantile(1.0 - p, alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

/// Lognormal with the mean and variance of median survival under the DAP.
pub fn lognormal_from_ig_median_survival(alpha: f64, ytilde: f64) -> Result<LogNormalParams> {
    check_positive("ytilde", ytilde)?;
    if !(alpha > 2.0) || !alpha.is_finite() {
        return Err(LapError::domain(format!(
            "inverse-gamma variance is infinite for alpha <= 2 (got {alpha})"
        )));
    }
    let m = LN_2 * alpha * ytilde / (alpha - 1.0);
    let v = m * m / (alpha - 2.0);
    let s2 = (v / (m * m)).ln_1p();
    Ok(LogNormalParams { mu: m.ln() - 0.5 * s2, sigma: s2.sqrt() })
}

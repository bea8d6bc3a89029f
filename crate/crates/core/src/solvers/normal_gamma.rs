//! NormalGamma hyperparameters from prior-predictive quantiles.

use serde::{Deserialize, Serialize};

use crate::error::{LapError, Result};
use crate::math::special::student_t_quantile;
use crate::math::student_t::StudentT;

/// `(mu, tau) ~ NG(mu0, gamma, alpha, beta)`: `tau ~ Gamma(alpha, rate beta)`
/// and `mu | tau ~ N(mu0, 1 / (gamma tau))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalGammaHyper {
    pub mu0: f64,
    pub gamma_ng: f64,
    pub alpha_ng: f64,
    pub beta_ng: f64,
}

impl NormalGammaHyper {
    pub fn validate(&self) -> Result<()> {
        if !self.mu0.is_finite() {
            return Err(LapError::domain("mu0 must be finite"));
        }
        for (n, v) in [("gamma_ng", self.gamma_ng), ("alpha_ng", self.alpha_ng), ("beta_ng", self.beta_ng)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LapError::domain(format!("{n} must be positive (got {v})")));
            }
        }
        Ok(())
    }

    /// Prior predictive `St(mu0, beta (gamma + 1) / (alpha gamma), 2 alpha)`.
    pub fn predictive(&self) -> Result<StudentT> {
        StudentT::new(
            self.mu0,
            self.beta_ng * (self.gamma_ng + 1.0) / (self.alpha_ng * self.gamma_ng),
            2.0 * self.alpha_ng,
        )
    }
}

/// Matches the predictive median and upper quartile with `gamma = n_e`
/// and `alpha = n_e / 2`; `beta` then has a closed form.
pub fn fit_student_t_hyperparams(q50: f64, q75: f64, n_e: f64) -> Result<NormalGammaHyper> {
    if !q50.is_finite() || !q75.is_finite() {
        return Err(LapError::domain("quantiles must be finite"));
    }
    if q75 <= q50 {
        return Err(LapError::Ordering(format!("q75 = {q75} must exceed q50 = {q50}")));
    }
    if !(n_e > 0.0) || !n_e.is_finite() {
        return Err(LapError::domain(format!("n_e must be positive (got {n_e})")));
    }
    let (gamma_ng, alpha_ng) = (n_e, n_e / 2.0);
    let t75 = student_t_quantile(0.75, 2.0 * alpha_ng);
    let scale = (q75 - q50) / t75;
    let beta_ng = scale * scale * alpha_ng * gamma_ng / (gamma_ng + 1.0);
    Ok(NormalGammaHyper { mu0: q50, gamma_ng, alpha_ng, beta_ng })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_quartile() {
        let h = fit_student_t_hyperparams(5.0, 6.35, 10.0).unwrap();
        assert_eq!((h.mu0, h.gamma_ng, h.alpha_ng), (5.0, 10.0, 5.0));
        let q = h.predictive().unwrap().quantile(0.75).unwrap();
        assert!((q - 6.35).abs() < 1e-8);
        assert!((h.beta_ng - 16.89).abs() < 0.1);
    }

    #[test]
    fn ordering() {
        assert!(matches!(fit_student_t_hyperparams(2.0, 2.0, 10.0), Err(LapError::Ordering(_))));
        assert!(fit_student_t_hyperparams(2.0, 3.0, 0.0).is_err());
    }
}

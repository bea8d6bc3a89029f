//! Exponential survival with expert opinion on median survival.

use std::f64::consts::LN_2;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{LapError, Result};
use crate::loss::{
    assemble_target, jacobian_correction_exponential_lambda, Constraint, ExpertBelief, ModelParts, NamedFn,
    ParameterSpace, TargetDensity,
};
use crate::math::special::{gamma_ln_pdf, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// Sample `t_med` under a uniform prior.
    #[default]
    MedianDirect,
    /// Sample `lambda` under a uniform prior and correct the loss on `t_med`.
    RateWithCorrection,
    /// Sample `lambda` under a uniform prior without the correction.
    RateUncorrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub time: f64,
    /// `false` for a right-censored time.
    pub event: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

fn default_interval() -> (f64, f64) {
    (0.001, 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentialSurvivalModel {
    #[serde(default)]
    pub parameterization: Parameterization,
    /// Uniform prior bounds for the sampled parameter.
    #[serde(default = "default_interval")]
    pub prior_interval: (f64, f64),
    /// Gamma prior on `lambda` in place of the uniform one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_prior: Option<GammaPrior>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub data: Vec<SurvivalRecord>,
}

impl Default for ExponentialSurvivalModel {
    fn default() -> Self {
        Self {
            parameterization: Parameterization::default(),
            prior_interval: default_interval(),
            gamma_prior: None,
            data: Vec::new(),
        }
    }
}

impl ExponentialSurvivalModel {
    pub fn new(parameterization: Parameterization) -> Self {
        Self { parameterization, ..Self::default() }
    }

    /// Range of `t_med` under the prior.
    pub fn median_range(&self) -> (f64, f64) {
        let (a, b) = self.prior_interval;
        match (self.gamma_prior, self.parameterization) {
            (Some(_), _) => (0.0, f64::INFINITY),
            (None, Parameterization::MedianDirect) => (a, b),
            (None, _) => (LN_2 / b, LN_2 / a),
        }
    }

    pub fn parts(&self) -> Result<ModelParts> {
        let (a, b) = self.prior_interval;
        if !(a > 0.0 && b > a && b.is_finite()) {
            return Err(LapError::Config(format!("prior interval ({a}, {b}) must satisfy 0 < a < b")));
        }
        for (i, r) in self.data.iter().enumerate() {
            if !(r.time >= 0.0 && r.time.is_finite()) {
                return Err(LapError::Ingestion {
                    message: format!("survival time {} must be finite and nonnegative", r.time),
                    rows: vec![i + 1],
                });
            }
        }
        let mut space = ParameterSpace::new();
        let direct = self.parameterization == Parameterization::MedianDirect;
        let mut parts = match self.gamma_prior {
            Some(g) => {
                if self.parameterization != Parameterization::RateUncorrected {
                    return Err(LapError::Config(
                        "a gamma prior on lambda requires parameterization rate_uncorrected".into(),
                    ));
                }
                if !(g.shape > 0.0 && g.rate > 0.0) {
                    return Err(LapError::Config("gamma prior shape and rate must be positive".into()));
                }
                space.add("lambda", 1, Constraint::Positive)?;
                let mut p = ModelParts::new(space, move |t| gamma_ln_pdf(t[0], g.shape, g.rate));
                let dist = Gamma::new(g.shape, 1.0 / g.rate).map_err(|e| LapError::Config(e.to_string()))?;
                p.prior_sampler = Some(Arc::new(move |rng| vec![dist.sample(rng)]));
                p
            }
            None => {
                let name = if direct { "t_med" } else { "lambda" };
                space.add(name, 1, Constraint::Interval { lo: a, hi: b })?;
                let ln_width = (b - a).ln();
                let mut p = ModelParts::new(space, move |t| {
                    if t[0] >= a && t[0] <= b {
                        -ln_width
                    } else {
                        f64::NEG_INFINITY
                    }
                });
                p.prior_sampler = Some(Arc::new(move |rng| vec![rng.random_range(a..b)]));
                p
            }
        };
        let to_lambda = move |x: f64| if direct { LN_2 / x } else { x };
        parts.functionals.push(NamedFn::new("t_med", move |t| LN_2 / to_lambda(t[0])));
        parts.functionals.push(NamedFn::new("lambda", move |t| to_lambda(t[0])));
        if self.parameterization == Parameterization::RateWithCorrection {
            parts.corrections.push((
                "t_med".into(),
                NamedFn::new("jacobian_correction", move |t| -jacobian_correction_exponential_lambda(t[0], a, b)),
            ));
        }
        if !self.data.is_empty() {
            let events = self.data.iter().filter(|r| r.event).count() as f64;
            let exposure: f64 = self.data.iter().map(|r| r.time).sum();
            parts.log_likelihood = Some(Arc::new(move |t| {
                let lambda = to_lambda(t[0]);
                events * lambda.ln() - lambda * exposure
            }));
        }
        Ok(parts)
    }
}

/// Loss-only target for a belief on `t_med` (or `lambda`) with the default
/// prior interval.
pub fn exponential_loss_only_target(belief: ExpertBelief, parameterization: Parameterization) -> Result<TargetDensity> {
    let model = ExponentialSurvivalModel::new(parameterization);
    let (lo, hi) = match belief.observable_name.as_str() {
        "t_med" => model.median_range(),
        "lambda" => {
            let (a, b) = model.median_range();
            (LN_2 / b, LN_2 / a)
        }
        other => return Err(LapError::Config(format!("unknown observable `{other}`"))),
    };
    let (slo, shi) = belief.spec.support();
    if shi <= lo || slo >= hi {
        return Err(LapError::Config(format!(
            "belief support [{slo}, {shi}] does not intersect the prior range ({lo}, {hi})"
        )));
    }
    assemble_target(model.parts()?, &[belief])
}

/// Density of median survival `t = log(2) psi` for `psi ~ IG(alpha, beta)`.
pub fn dap_density_median_survival(alpha: f64, beta: f64, t_med: f64) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(LapError::domain("alpha and beta must be positive"));
    }
    if !(t_med > 0.0) {
        return Ok(0.0);
    }
    let x = t_med / LN_2;
    let ln = alpha * beta.ln() - ln_gamma(alpha) - (alpha + 1.0) * x.ln() - beta / x - LN_2.ln();
    Ok(ln.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::dist::DistributionSpec;
    use crate::math::quad::integrate;
    use crate::math::special::inverse_gamma_ln_pdf;

    #[test]
    fn median_survival_density() {
        let f = |t: f64| dap_density_median_survival(10.0, 10.0, t).unwrap();
        let total = integrate(f, 0.0, 0.7, 1e-12) + integrate(f, 0.7, f64::INFINITY, 1e-12);
        assert!((total - 1.0).abs() < 1e-6);
        for &t in &[0.3, 0.7, 1.4] {
            let ig = inverse_gamma_ln_pdf(t / LN_2, 10.0, 10.0).exp() / LN_2;
            assert!((f(t) - ig).abs() < 1e-12);
        }
        let median = crate::math::roots::bisect(|t| integrate(f, 0.0, t, 1e-12) - 0.5, 0.3, 1.5, 1e-10).unwrap();
        assert!((median - 0.717).abs() < 0.005);
    }

    #[test]
    fn parameterizations_share_lambda() {
        for p in [Parameterization::MedianDirect, Parameterization::RateWithCorrection, Parameterization::RateUncorrected] {
            let parts = ExponentialSurvivalModel::new(p).parts().unwrap();
            let theta = [0.8];
            let t_med = parts.functionals[0].eval(&theta);
            let lambda = parts.functionals[1].eval(&theta);
            assert!((lambda - LN_2 / t_med).abs() < 1e-15);
        }
    }

    #[test]
    fn disjoint_belief_is_config_error() {
        let far = ExpertBelief::new("t_med", DistributionSpec::truncated(
            crate::math::dist::Family::Normal { mu: 50.0, sigma: 1.0 }, 40.0, 60.0).unwrap());
        assert!(matches!(
            exponential_loss_only_target(far, Parameterization::MedianDirect),
            Err(LapError::Config(_))
        ));
    }

    #[test]
    fn gamma_prior_needs_uncorrected_rate() {
        let m = ExponentialSurvivalModel {
            gamma_prior: Some(GammaPrior { shape: 2.0, rate: 1.0 }),
            ..ExponentialSurvivalModel::new(Parameterization::MedianDirect)
        };
        assert!(m.parts().is_err());
    }
}

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::math::dist::DistributionSpec;

/// A real-valued function of the constrained parameter vector.
pub type ParamFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A named deterministic map from parameters to a real number.
#[derive(Clone)]
pub struct NamedFn {
    pub name: String,
    f: ParamFn,
}

impl NamedFn {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        (self.f)(theta)
    }
}

impl fmt::Debug for NamedFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NamedFn({})", self.name)
    }
}

/// Observable quantity `g(theta)` such as median survival.
pub type ObservableFunctional = NamedFn;

/// Term that cancels a density the prior induces on an observable.
pub type FlatteningTerm = NamedFn;

/// An expert's distribution over one observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertBelief {
    #[serde(rename = "observable")]
    pub observable_name: String,
    #[serde(flatten)]
    pub spec: DistributionSpec,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

impl ExpertBelief {
    pub fn new(observable: impl Into<String>, spec: DistributionSpec) -> Self {
        Self { observable_name: observable.into(), spec, description: String::new() }
    }
}

#[derive(Debug, Clone)]
pub struct LossTerm {
    pub functional: ObservableFunctional,
    pub belief: ExpertBelief,
    pub correction: Option<NamedFn>,
}

/// Log-target contribution of one loss term: the belief's log density at
/// the functional value plus the optional correction.
pub fn loss_contribution(term: &LossTerm, theta: &[f64]) -> f64 {
    let x = term.functional.eval(theta);
    let lp = term.belief.spec.ln_pdf(x);
    if !(lp > f64::NEG_INFINITY) {
        return f64::NEG_INFINITY;
    }
    match &term.correction {
        Some(c) => lp + c.eval(theta),
        None => lp,
    }
}

/// `log(lambda^2 / ((b - a) log 2))`, the change-of-variables factor that
/// a belief on `t_med = log 2 / lambda` needs under a `U(a, b)` prior on
/// `lambda`. It enters the loss with a plus sign, so the log target
/// subtracts it.
pub fn jacobian_correction_exponential_lambda(lambda: f64, a: f64, b: f64) -> f64 {
    if !(lambda > a && lambda < b) {
        return f64::NEG_INFINITY;
    }
    (lambda * lambda / ((b - a) * std::f64::consts::LN_2)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::dist::Family;
    use std::f64::consts::{LN_2, PI};

    fn term(spec: DistributionSpec) -> LossTerm {
        LossTerm {
            functional: NamedFn::new("x", |t| t[0]),
            belief: ExpertBelief::new("x", spec),
            correction: None,
        }
    }

    #[test]
    fn correction_examples() {
        let c = jacobian_correction_exponential_lambda(1.0, 0.001, 10.0);
        assert!((c - (1.0 / (9.999 * LN_2)).ln()).abs() < 1e-12);
        assert!((c + 1.9367).abs() < 1e-3);
        let root = (LN_2 * 9.999).sqrt();
        assert!(jacobian_correction_exponential_lambda(root, 0.001, 10.0).abs() < 1e-14);
        let d = jacobian_correction_exponential_lambda(2.0, 0.001, 10.0)
            - jacobian_correction_exponential_lambda(1.0, 0.001, 10.0);
        assert!((d - 2.0 * LN_2).abs() < 1e-14);
    }

    #[test]
    fn contribution_is_belief_log_pdf() {
        let t = term(DistributionSpec::normal(2.5, 1.5).unwrap());
        let want = -(1.5 * (2.0 * PI).sqrt()).ln();
        assert!((loss_contribution(&t, &[2.5]) - want).abs() < 1e-14);

        let h = term(
            DistributionSpec::new(Family::Histogram { edges: vec![0.0, 1.0], weights: vec![1.0] })
                .unwrap(),
        );
        assert_eq!(loss_contribution(&h, &[2.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn belief_json_is_flat() {
        let b: ExpertBelief = serde_json::from_str(
            r#"{"observable": "t_med", "family": "lognormal", "params": {"mu": -0.32, "sigma": 0.34}}"#,
        )
        .unwrap();
        assert_eq!(b.observable_name, "t_med");
        assert_eq!(b.spec, DistributionSpec::lognormal(-0.32, 0.34).unwrap());
        let back: ExpertBelief = serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
        assert_eq!(back, b);
    }
}

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::belief::{loss_contribution, ExpertBelief, FlatteningTerm, LossTerm, NamedFn, ObservableFunctional, ParamFn};
use super::space::ParameterSpace;
use crate::error::{LapError, Result};

/// Draws a constrained parameter vector from the prior.
pub type PriorSampler = Arc<dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Send + Sync>;

const CONFLICT_DRAWS: usize = 1000;
const CONFLICT_SEED: u64 = 0x5eed_c0f1;

/// Model-specific pieces from which a target is assembled.
pub struct ModelParts {
    pub space: ParameterSpace,
    pub log_prior: ParamFn,
    pub log_likelihood: Option<ParamFn>,
    /// Every observable a belief may refer to.
    pub functionals: Vec<ObservableFunctional>,
    /// Corrections attached to losses on the named observable.
    pub corrections: Vec<(String, NamedFn)>,
    pub flattening: Vec<FlatteningTerm>,
    /// Beliefs the model itself carries, added to those passed in.
    pub beliefs: Vec<ExpertBelief>,
    pub prior_sampler: Option<PriorSampler>,
    pub warnings: Vec<String>,
}

impl ModelParts {
    pub fn new(space: ParameterSpace, log_prior: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            space,
            log_prior: Arc::new(log_prior),
            log_likelihood: None,
            functionals: Vec::new(),
            corrections: Vec::new(),
            flattening: Vec::new(),
            beliefs: Vec::new(),
            prior_sampler: None,
            warnings: Vec::new(),
        }
    }
}

/// Unnormalized log posterior over the unconstrained space:
/// prior + likelihood + losses + flattening + log-Jacobian.
#[derive(Clone)]
pub struct TargetDensity {
    space: ParameterSpace,
    log_prior: ParamFn,
    log_likelihood: Option<ParamFn>,
    loss_terms: Vec<LossTerm>,
    flattening: Vec<FlatteningTerm>,
    observables: Vec<ObservableFunctional>,
    prior_sampler: Option<PriorSampler>,
    warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetBreakdown {
    pub log_prior: f64,
    pub log_likelihood: f64,
    pub losses: Vec<(String, f64)>,
    pub flattening: Vec<(String, f64)>,
    pub log_jacobian: f64,
    pub total: f64,
}

/// Resolves each belief to a functional of the model and builds the target.
/// Several beliefs on one observable multiply.
pub fn assemble_target(parts: ModelParts, beliefs: &[ExpertBelief]) -> Result<TargetDensity> {
    let all: Vec<&ExpertBelief> = parts.beliefs.iter().chain(beliefs).collect();
    let mut loss_terms = Vec::with_capacity(all.len());
    for b in all {
        let functional = parts
            .functionals
            .iter()
            .find(|f| f.name == b.observable_name)
            .cloned()
            .ok_or_else(|| {
                let known: Vec<&str> = parts.functionals.iter().map(|f| f.name.as_str()).collect();
                LapError::Config(format!(
                    "unknown observable `{}` (available: {})",
                    b.observable_name,
                    known.join(", ")
                ))
            })?;
        // a correction cancels the prior's induced density once per observable
        let first = !loss_terms.iter().any(|t: &LossTerm| t.belief.observable_name == b.observable_name);
        let correction = parts
            .corrections
            .iter()
            .find(|(n, _)| first && *n == b.observable_name)
            .map(|(_, c)| c.clone());
        loss_terms.push(LossTerm { functional, belief: b.clone(), correction });
    }

    let names = parts.space.param_names();
    let observables: Vec<ObservableFunctional> =
        parts.functionals.into_iter().filter(|f| !names.contains(&f.name)).collect();

    let mut target = TargetDensity {
        space: parts.space,
        log_prior: parts.log_prior,
        log_likelihood: parts.log_likelihood,
        loss_terms,
        flattening: parts.flattening,
        observables,
        prior_sampler: parts.prior_sampler,
        warnings: parts.warnings,
    };
    let conflicts = target.conflict_warnings();
    target.warnings.extend(conflicts);
    Ok(target)
}

impl TargetDensity {
    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.space.param_names()
    }

    pub fn observable_names(&self) -> Vec<String> {
        self.observables.iter().map(|o| o.name.clone()).collect()
    }

    pub fn loss_terms(&self) -> &[LossTerm] {
        &self.loss_terms
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn has_likelihood(&self) -> bool {
        self.log_likelihood.is_some()
    }

    /// Log target with `theta` as scratch space for the constrained values.
    pub fn log_density_with(&self, u: &[f64], theta: &mut [f64]) -> f64 {
        let log_jac = self.space.constrain(u, theta);
        let v = log_jac + self.log_density_constrained(theta);
        if v.is_nan() || v == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    pub fn log_density(&self, u: &[f64]) -> f64 {
        let mut theta = vec![0.0; self.dim()];
        self.log_density_with(u, &mut theta)
    }

    /// Log target as a density over the constrained parameters (no
    /// transform Jacobian).
    pub fn log_density_constrained(&self, theta: &[f64]) -> f64 {
        let mut v = (self.log_prior)(theta);
        if v == f64::NEG_INFINITY {
            return v;
        }
        if let Some(ll) = &self.log_likelihood {
            v += ll(theta);
        }
        for t in &self.loss_terms {
            v += loss_contribution(t, theta);
        }
        for f in &self.flattening {
            v += f.eval(theta);
        }
        // NaN, and +inf from a flattening term at the boundary, mark
        // numerically degenerate points
        if v.is_nan() || v == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    pub fn breakdown(&self, u: &[f64]) -> TargetBreakdown {
        let (theta, log_jacobian) = self.space.constrain_vec(u);
        let log_prior = (self.log_prior)(&theta);
        let log_likelihood = self.log_likelihood.as_ref().map_or(0.0, |ll| ll(&theta));
        let losses: Vec<(String, f64)> = self
            .loss_terms
            .iter()
            .map(|t| (t.belief.observable_name.clone(), loss_contribution(t, &theta)))
            .collect();
        let flattening: Vec<(String, f64)> =
            self.flattening.iter().map(|f| (f.name.clone(), f.eval(&theta))).collect();
        let total = log_prior
            + log_likelihood
            + losses.iter().map(|l| l.1).sum::<f64>()
            + flattening.iter().map(|l| l.1).sum::<f64>()
            + log_jacobian;
        TargetBreakdown { log_prior, log_likelihood, losses, flattening, log_jacobian, total }
    }

    pub fn constrain(&self, u: &[f64]) -> Vec<f64> {
        self.space.constrain_vec(u).0
    }

    /// Observable traces for constrained `theta`, in [`Self::observable_names`] order.
    pub fn observables(&self, theta: &[f64]) -> Vec<f64> {
        self.observables.iter().map(|o| o.eval(theta)).collect()
    }

    pub fn sample_prior(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        self.prior_sampler.as_ref().map(|s| s(rng))
    }

    /// Beliefs whose central 99% interval misses every value the
    /// functional takes over a batch of prior draws.
    fn conflict_warnings(&self) -> Vec<String> {
        let Some(sampler) = &self.prior_sampler else {
            return Vec::new();
        };
        if self.loss_terms.is_empty() {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(CONFLICT_SEED);
        let draws: Vec<Vec<f64>> = (0..CONFLICT_DRAWS).map(|_| sampler(&mut rng)).collect();
        let mut out = Vec::new();
        for t in &self.loss_terms {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for d in &draws {
                let v = t.functional.eval(d);
                if v.is_finite() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            let (Ok(blo), Ok(bhi)) = (t.belief.spec.quantile(0.005), t.belief.spec.quantile(0.995))
            else {
                continue;
            };
            if lo > hi || hi < blo || lo > bhi {
                out.push(format!(
                    "belief on `{}` (99% interval [{blo:.4}, {bhi:.4}]) does not overlap the prior range [{lo:.4}, {hi:.4}] of the observable",
                    t.belief.observable_name
                ));
            }
        }
        out
    }
}

//! Univariate distribution families used for expert beliefs and priors.
//!
//! Every family can be truncated to a sub-interval of its natural support;
//! outside the (possibly truncated) support the log density is `-inf` rather
//! than an error.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lomax::{lomax_cdf, lomax_ln_pdf, lomax_quantile};
use super::roots::invert_increasing;
use super::special::{
    beta_ln_pdf, beta_reg, gamma_ln_pdf, gamma_p, gamma_q, gamma_quantile,
    inverse_gamma_ln_pdf, lognormal_ln_pdf, normal_cdf, normal_ln_pdf, normal_quantile,
    student_t_cdf, student_t_ln_pdf, student_t_quantile,
};
use crate::error::{LapError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    LogNormal { mu: f64, sigma: f64 },
    Normal { mu: f64, sigma: f64 },
    Gamma { shape: f64, rate: f64 },
    InverseGamma { shape: f64, scale: f64 },
    Lomax { alpha: f64, beta: f64 },
    StudentT { mu: f64, scale: f64, df: f64 },
    Beta { a: f64, b: f64 },
    Histogram { edges: Vec<f64>, weights: Vec<f64> },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::LogNormal { .. } => "lognormal",
            Family::Normal { .. } => "normal",
            Family::Gamma { .. } => "gamma",
            Family::InverseGamma { .. } => "inverse-gamma",
            Family::Lomax { .. } => "lomax",
            Family::StudentT { .. } => "student-t-nonstandard",
            Family::Beta { .. } => "beta",
            Family::Histogram { .. } => "histogram",
        }
    }

    fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(LapError::domain(format!(
                    "{}: parameter {name} must be finite and > 0 (got {v})",
                    self.name()
                )))
            }
        };
        let finite = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(LapError::domain(format!("{}: parameter {name} must be finite", self.name())))
            }
        };
        match *self {
            Family::LogNormal { mu, sigma } | Family::Normal { mu, sigma } => {
                finite("mu", mu)?;
                pos("sigma", sigma)
            }
            Family::Gamma { shape, rate } => {
                pos("shape", shape)?;
                pos("rate", rate)
            }
            Family::InverseGamma { shape, scale } => {
                pos("shape", shape)?;
                pos("scale", scale)
            }
            Family::Lomax { alpha, beta } => {
                pos("alpha", alpha)?;
                pos("beta", beta)
            }
            Family::StudentT { mu, scale, df } => {
                finite("mu", mu)?;
                pos("scale", scale)?;
                pos("df", df)
            }
            Family::Beta { a, b } => {
                pos("a", a)?;
                pos("b", b)
            }
            Family::Histogram { ref edges, ref weights } => {
                if edges.len() < 2 || edges.len() != weights.len() + 1 {
                    return Err(LapError::domain(
                        "histogram needs n+1 edges for n weights (n >= 1)",
                    ));
                }
                if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(LapError::domain("histogram edges must be finite and strictly increasing"));
                }
                if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                    return Err(LapError::domain("histogram weights must be nonnegative"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(LapError::domain(format!(
                        "histogram weights must sum to 1 (sum = {total})"
                    )));
                }
                Ok(())
            }
        }
    }

    fn natural_support(&self) -> (f64, f64) {
        match self {
            Family::Normal { .. } | Family::StudentT { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Family::LogNormal { .. }
            | Family::Gamma { .. }
            | Family::InverseGamma { .. }
            | Family::Lomax { .. } => (0.0, f64::INFINITY),
            Family::Beta { .. } => (0.0, 1.0),
            Family::Histogram { edges, .. } => (edges[0], edges[edges.len() - 1]),
        }
    }

    fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Family::LogNormal { mu, sigma } => lognormal_ln_pdf(x, mu, sigma),
            Family::Normal { mu, sigma } => normal_ln_pdf(x, mu, sigma),
            Family::Gamma { shape, rate } => gamma_ln_pdf(x, shape, rate),
            Family::InverseGamma { shape, scale } => inverse_gamma_ln_pdf(x, shape, scale),
            Family::Lomax { alpha, beta } => lomax_ln_pdf(x, alpha, beta),
            Family::StudentT { mu, scale, df } => student_t_ln_pdf((x - mu) / scale, df) - scale.ln(),
            Family::Beta { a, b } => beta_ln_pdf(x, a, b),
            Family::Histogram { ref edges, ref weights } => match histogram_bin(edges, x) {
                Some(i) => (weights[i] / (edges[i + 1] - edges[i])).ln(),
                None => f64::NEG_INFINITY,
            },
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match *self {
            Family::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    normal_cdf((x.ln() - mu) / sigma)
                }
            }
            Family::Normal { mu, sigma } => normal_cdf((x - mu) / sigma),
            Family::Gamma { shape, rate } => gamma_p(shape, rate * x),
            Family::InverseGamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    gamma_q(shape, scale / x)
                }
            }
            Family::Lomax { alpha, beta } => {
                if x <= 0.0 {
                    0.0
                } else {
                    lomax_cdf(x, alpha, beta).unwrap_or(f64::NAN)
                }
            }
            Family::StudentT { mu, scale, df } => student_t_cdf((x - mu) / scale, df),
            Family::Beta { a, b } => beta_reg(a, b, x),
            Family::Histogram { ref edges, ref weights } => {
                if x <= edges[0] {
                    return 0.0;
                }
                let mut acc = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    if x < edges[i + 1] {
                        return acc + w * (x - edges[i]) / (edges[i + 1] - edges[i]);
                    }
                    acc += w;
                }
                1.0
            }
        }
    }

    /// Quantile of the untruncated family, `p` in (0, 1).
    fn quantile(&self, p: f64) -> f64 {
        match *self {
            Family::LogNormal { mu, sigma } => (mu + sigma * normal_quantile(p)).exp(),
            Family::Normal { mu, sigma } => mu + sigma * normal_quantile(p),
            Family::Gamma { shape, rate } => gamma_quantile(p, shape) / rate,
            Family::InverseGamma { shape, scale } => scale / gamma_quantile(1.0 - p, shape),
            Family::Lomax { alpha, beta } => lomax_quantile(p, alpha, beta).unwrap_or(f64::NAN),
            Family::StudentT { mu, scale, df } => mu + scale * student_t_quantile(p, df),
            Family::Beta { a, b } => invert_increasing(
                |x| beta_reg(a, b, x),
                |x| beta_ln_pdf(x, a, b).exp(),
                p,
                0.0,
                1.0,
            ),
            Family::Histogram { ref edges, ref weights } => {
                let mut acc = 0.0;
                for (i, &w) in weights.iter().enumerate() {
                    if w > 0.0 && acc + w >= p {
                        let frac = ((p - acc) / w).clamp(0.0, 1.0);
                        return edges[i] + frac * (edges[i + 1] - edges[i]);
                    }
                    acc += w;
                }
                edges[edges.len() - 1]
            }
        }
    }
}

/// Half-open bins `[e_i, e_{i+1})`, with the last bin closed on the right.
fn histogram_bin(edges: &[f64], x: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if !(x >= edges[0] && x <= edges[n]) {
        return None;
    }
    let idx = edges.partition_point(|&e| e <= x);
    Some(idx.saturating_sub(1).min(n - 1))
}

/// A validated distribution, possibly truncated to `support`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct DistributionSpec {
    family: Family,
    requested: Option<[Option<f64>; 2]>,
    lo: f64,
    hi: f64,
    cdf_lo: f64,
    mass: f64,
    ln_mass: f64,
}

impl DistributionSpec {
    pub fn new(family: Family) -> Result<Self> {
        Self::build(family, None)
    }

    /// Truncates `family` to `[lo, hi]` intersected with its natural support.
    pub fn truncated(family: Family, lo: f64, hi: f64) -> Result<Self> {
        let lo = if lo.is_finite() { Some(lo) } else { None };
        let hi = if hi.is_finite() { Some(hi) } else { None };
        Self::build(family, Some([lo, hi]))
    }

    fn build(family: Family, requested: Option<[Option<f64>; 2]>) -> Result<Self> {
        family.validate()?;
        let (nlo, nhi) = family.natural_support();
        let (mut lo, mut hi) = (nlo, nhi);
        if let Some([rlo, rhi]) = requested {
            if let Some(v) = rlo {
                lo = lo.max(v);
            }
            if let Some(v) = rhi {
                hi = hi.min(v);
            }
        }
        if !(lo < hi) {
            return Err(LapError::domain(format!(
                "{}: support [{lo}, {hi}] is empty",
                family.name()
            )));
        }
        let cdf_lo = if lo > nlo { family.cdf(lo) } else { 0.0 };
        let cdf_hi = if hi < nhi { family.cdf(hi) } else { 1.0 };
        let mass = cdf_hi - cdf_lo;
        if !(mass > 0.0) {
            return Err(LapError::domain(format!(
                "{}: truncation interval [{lo}, {hi}] carries no probability",
                family.name()
            )));
        }
        Ok(Self { family, requested, lo, hi, cdf_lo, mass, ln_mass: mass.ln() })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::LogNormal { mu, sigma })
    }

    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Normal { mu, sigma })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::new(Family::Gamma { shape, rate })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn is_truncated(&self) -> bool {
        self.mass < 1.0
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x >= self.lo && x <= self.hi) {
            return f64::NEG_INFINITY;
        }
        self.family.ln_pdf(x) - self.ln_mass
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        ((self.family.cdf(x) - self.cdf_lo) / self.mass).clamp(0.0, 1.0)
    }

    /// `(log_pdf, cdf)` at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        (self.ln_pdf(x), self.cdf(x))
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(LapError::domain(format!("probability must be in (0, 1) (got {p})")));
        }
        let q = self.family.quantile(self.cdf_lo + p * self.mass);
        Ok(q.clamp(self.lo, self.hi))
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                if let Ok(x) = self.quantile(u) {
                    return x;
                }
            }
        }
    }
}

/// `(log_pdf, cdf)` of `spec` at `x`.
pub fn dist_eval(spec: &DistributionSpec, x: f64) -> (f64, f64) {
    spec.eval(x)
}

pub fn dist_quantile(spec: &DistributionSpec, p: f64) -> Result<f64> {
    spec.quantile(p)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSpec {
    family: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    support: Option<[Option<f64>; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl TryFrom<RawSpec> for DistributionSpec {
    type Error = LapError;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let mut params = raw.params;
        let family_name = raw.family.to_ascii_lowercase();
        let mut take = |name: &str| -> Result<f64> {
            params.remove(name).ok_or_else(|| {
                LapError::Config(format!("{family_name}: missing parameter `{name}`"))
            })
        };
        let family = match family_name.as_str() {
            "lognormal" => Family::LogNormal { mu: take("mu")?, sigma: take("sigma")? },
            "normal" => Family::Normal { mu: take("mu")?, sigma: take("sigma")? },
            "gamma" => Family::Gamma { shape: take("shape")?, rate: take("rate")? },
            "inverse-gamma" => Family::InverseGamma { shape: take("shape")?, scale: take("scale")? },
            "lomax" => Family::Lomax { alpha: take("alpha")?, beta: take("beta")? },
            "student-t-nonstandard" | "student-t" => {
                let mu = take("mu")?;
                let df = take("df")?;
                let scale = match take("scale") {
                    Ok(s) => s,
                    Err(_) => take("scale_sq")?.sqrt(),
                };
                Family::StudentT { mu, scale, df }
            }
            "beta" => Family::Beta { a: take("a")?, b: take("b")? },
            "histogram" => Family::Histogram {
                edges: raw.edges.ok_or_else(|| LapError::Config("histogram: missing `edges`".into()))?,
                weights: raw
                    .weights
                    .ok_or_else(|| LapError::Config("histogram: missing `weights`".into()))?,
            },
            other => return Err(LapError::Config(format!("unknown distribution family `{other}`"))),
        };
        if let Some(extra) = params.keys().next() {
            return Err(LapError::Config(format!(
                "{}: unexpected parameter `{extra}`",
                family.name()
            )));
        }
        Self::build(family, raw.support)
    }
}

impl From<DistributionSpec> for RawSpec {
    fn from(spec: DistributionSpec) -> Self {
        let mut params = BTreeMap::new();
        let (mut edges, mut weights) = (None, None);
        match spec.family {
            Family::LogNormal { mu, sigma } | Family::Normal { mu, sigma } => {
                params.insert("mu".into(), mu);
                params.insert("sigma".into(), sigma);
            }
            Family::Gamma { shape, rate } => {
                params.insert("shape".into(), shape);
                params.insert("rate".into(), rate);
            }
            Family::InverseGamma { shape, scale } => {
                params.insert("shape".into(), shape);
                params.insert("scale".into(), scale);
            }
            Family::Lomax { alpha, beta } => {
                params.insert("alpha".into(), alpha);
                params.insert("beta".into(), beta);
            }
            Family::StudentT { mu, scale, df } => {
                params.insert("mu".into(), mu);
                params.insert("scale".into(), scale);
                params.insert("df".into(), df);
            }
            Family::Beta { a, b } => {
                params.insert("a".into(), a);
                params.insert("b".into(), b);
            }
            Family::Histogram { edges: ref e, weights: ref w } => {
                edges = Some(e.clone());
                weights = Some(w.clone());
            }
        }
        RawSpec {
            family: spec.family.name().to_string(),
            params,
            support: spec.requested,
            edges,
            weights,
        }
    }
}

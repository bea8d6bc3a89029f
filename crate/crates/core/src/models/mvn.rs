//! Multivariate normal with NormalGamma marginals, an LKJ correlation prior
//! and Fisher-z losses on elicited concordance probabilities.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{LapError, Result};
use crate::loss::{Constraint, ExpertBelief, ModelParts, NamedFn, ParameterSpace};
use crate::math::corr::{
    concordance_to_correlation, fisher_se, lkj_marginal_log_density, lkj_sample, n_pairs, pair_list, CorrelationMatrix,
};
use crate::math::dist::DistributionSpec;
use crate::math::special::{gamma_ln_pdf, normal_ln_pdf};
use crate::solvers::{coherency_reports, fit_student_t_hyperparams, NormalGammaHyper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Flattening {
    /// Divide the LKJ marginal Beta density of every correlation out of the target.
    #[default]
    MarginalBeta,
    /// Divide the joint LKJ density `det(S)^(eta - 1)` out of the target.
    JointLkj,
    None,
}

/// Per-component prior: either elicited predictive quantiles or explicit hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MarginalInput {
    Quantiles { q50: f64, q75: f64 },
    Hyper(NormalGammaHyper),
}

/// Elicited median concordance (`p`) or correlation (`r`) for a 1-based pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcordanceInput {
    pub pair: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

impl ConcordanceInput {
    pub fn from_p(i: usize, j: usize, p: f64) -> Self {
        Self { pair: (i, j), p: Some(p), r: None }
    }

    pub fn correlation(&self) -> Result<f64> {
        match (self.p, self.r) {
            (Some(p), None) => concordance_to_correlation(p),
            (None, Some(r)) if r > -1.0 && r < 1.0 => Ok(r),
            (None, Some(r)) => Err(LapError::domain(format!("correlation {r} outside (-1, 1)"))),
            _ => Err(LapError::Config(format!(
                "pair {:?}: give exactly one of `p` or `r`",
                self.pair
            ))),
        }
    }
}

fn default_eta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MvnElicitationModel {
    pub k: usize,
    /// Expert effective sample size.
    pub n_e: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub flattening: Flattening,
    #[serde(default)]
    pub marginals: Vec<MarginalInput>,
    #[serde(default)]
    pub concordances: Vec<ConcordanceInput>,
    /// Attach `-log(1 - r^2)` to each Fisher loss so the implied density of
    /// `z = artanh(r)` is the belief itself rather than belief times `1 - r^2`.
    #[serde(default)]
    pub fisher_jacobian: bool,
    /// Observations, one row of `k` values each.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Vec<Vec<f64>>>,
}

impl MvnElicitationModel {
    pub fn new(k: usize, n_e: f64) -> Self {
        Self {
            k,
            n_e,
            eta: 1.0,
            flattening: Flattening::default(),
            marginals: Vec::new(),
            concordances: Vec::new(),
            fisher_jacobian: false,
            data: None,
        }
    }

    /// Hyperparameters per component. Components without input get a
    /// standard NormalGamma(0, n_e, n_e / 2, n_e / 2).
    pub fn hypers(&self) -> Result<Vec<NormalGammaHyper>> {
        if !self.marginals.is_empty() && self.marginals.len() != self.k {
            return Err(LapError::Config(format!(
                "expected {} marginals, got {}",
                self.k,
                self.marginals.len()
            )));
        }
        (0..self.k)
            .map(|i| {
                let h = match self.marginals.get(i) {
                    Some(MarginalInput::Quantiles { q50, q75 }) => fit_student_t_hyperparams(*q50, *q75, self.n_e)?,
                    Some(MarginalInput::Hyper(h)) => *h,
                    None => NormalGammaHyper {
                        mu0: 0.0,
                        gamma_ng: self.n_e,
                        alpha_ng: self.n_e / 2.0,
                        beta_ng: self.n_e / 2.0,
                    },
                };
                h.validate()?;
                Ok(h)
            })
            .collect()
    }

    /// Elicited correlations keyed by 0-based pair index.
    pub fn elicited(&self) -> Result<Vec<(usize, f64)>> {
        let pairs = pair_list(self.k);
        let mut out: Vec<(usize, f64)> = Vec::new();
        for c in &self.concordances {
            let (i, j) = (c.pair.0.min(c.pair.1), c.pair.0.max(c.pair.1));
            let idx = pairs
                .iter()
                .position(|&(a, b)| i >= 1 && (a + 1, b + 1) == (i, j))
                .ok_or_else(|| LapError::Config(format!("pair {:?} is not valid for k = {}", c.pair, self.k)))?;
            if out.iter().any(|(o, _)| *o == idx) {
                return Err(LapError::Config(format!("pair {:?} given twice", c.pair)));
            }
            out.push((idx, c.correlation()?));
        }
        out.sort_by_key(|(i, _)| *i);
        Ok(out)
    }

    pub fn parts(&self) -> Result<ModelParts> {
        let k = self.k;
        if k < 2 {
            return Err(LapError::Config("MVN model needs k >= 2".into()));
        }
        if !(self.eta > 0.0) {
            return Err(LapError::Config(format!("eta must be positive (got {})", self.eta)));
        }
        let hypers = self.hypers()?;
        let elicited = self.elicited()?;
        let pairs = pair_list(k);
        let np = n_pairs(k);

        let mut space = ParameterSpace::new();
        space.add("mu", k, Constraint::Real)?;
        space.add("tau", k, Constraint::Positive)?;
        space.add("rho", np, Constraint::Correlation { k })?;
        let (mu_off, tau_off, rho_off) = (0, k, 2 * k);

        let eta = self.eta;
        let hp = hypers.clone();
        let mut parts = ModelParts::new(space, move |t| {
            let mut lp = 0.0;
            for (i, h) in hp.iter().enumerate() {
                let tau = t[tau_off + i];
                lp += gamma_ln_pdf(tau, h.alpha_ng, h.beta_ng);
                lp += normal_ln_pdf(t[mu_off + i], h.mu0, (h.gamma_ng * tau).sqrt().recip());
            }
            if eta != 1.0 {
                lp += (eta - 1.0) * log_det_entries(k, &t[rho_off..rho_off + np]);
            }
            lp
        });

        for (idx, &(i, j)) in pairs.iter().enumerate() {
            let tag = format!("[{},{}]", i + 1, j + 1);
            let at = rho_off + idx;
            parts.functionals.push(NamedFn::new(format!("z{tag}"), move |t| t[at].atanh()));
            parts
                .functionals
                .push(NamedFn::new(format!("concordance{tag}"), move |t| 0.5 + t[at].asin() / PI));
        }

        match self.flattening {
            Flattening::MarginalBeta => {
                parts.flattening.push(NamedFn::new("lkj_marginal", move |t| {
                    let mut s = 0.0;
                    for &r in &t[rho_off..rho_off + np] {
                        match lkj_marginal_log_density(r, eta, k) {
                            Ok(v) => s -= v,
                            Err(_) => return f64::NEG_INFINITY,
                        }
                    }
                    s
                }));
            }
            Flattening::JointLkj if eta != 1.0 => {
                parts.flattening.push(NamedFn::new("lkj_joint", move |t| {
                    -(eta - 1.0) * log_det_entries(k, &t[rho_off..rho_off + np])
                }));
            }
            _ => {}
        }

        if !elicited.is_empty() {
            let se = fisher_se(self.n_e)?;
            for &(idx, r) in &elicited {
                let (i, j) = pairs[idx];
                let spec = DistributionSpec::normal(r.atanh(), se)?;
                let mut b = ExpertBelief::new(format!("z[{},{}]", i + 1, j + 1), spec);
                b.description = format!("Fisher-z of elicited correlation {r:.4}");
                parts.beliefs.push(b);
                if self.fisher_jacobian {
                    let at = rho_off + idx;
                    parts.corrections.push((
                        format!("z[{},{}]", i + 1, j + 1),
                        NamedFn::new("fisher_jacobian", move |t| -(-t[at] * t[at]).ln_1p()),
                    ));
                }
            }
        }
        if elicited.len() == np {
            let mut entries = vec![0.0; np];
            for &(idx, r) in &elicited {
                entries[idx] = r;
            }
            let (reports, bad) = coherency_reports(k, &entries)?;
            if !bad.is_empty() {
                parts.warnings.push(format!(
                    "elicited correlations are globally incoherent; non positive definite minors {bad:?}"
                ));
            }
            for rep in reports.iter().filter(|r| !r.in_interval) {
                parts.warnings.push(format!(
                    "elicited correlation for pair ({},{}) is {:.4}, outside its coherency interval {}",
                    rep.pair.0,
                    rep.pair.1,
                    rep.r,
                    match rep.interval {
                        Some((lo, hi)) => format!("({lo:.4}, {hi:.4})"),
                        None => "(undefined)".into(),
                    }
                ));
            }
        }

        if let Some(rows) = &self.data {
            let stats = SuffStats::new(k, rows)?;
            parts.log_likelihood = Some(Arc::new(move |t| {
                stats.log_likelihood(&t[mu_off..mu_off + k], &t[tau_off..tau_off + k], &t[rho_off..rho_off + np])
            }));
        }

        let samplers: Vec<(Gamma<f64>, f64, f64)> = hypers
            .iter()
            .map(|h| {
                Gamma::new(h.alpha_ng, 1.0 / h.beta_ng)
                    .map(|g| (g, h.mu0, h.gamma_ng))
                    .map_err(|e| LapError::Config(e.to_string()))
            })
            .collect::<Result<_>>()?;
        parts.prior_sampler = Some(Arc::new(move |rng| {
            let mut theta = vec![0.0; 2 * k + np];
            for (i, (g, mu0, gam)) in samplers.iter().enumerate() {
                let tau: f64 = g.sample(rng);
                theta[tau_off + i] = tau;
                theta[mu_off + i] = Normal::new(*mu0, (gam * tau).sqrt().recip())
                    .map(|n| n.sample(rng))
                    .unwrap_or(*mu0);
            }
            if let Ok(m) = lkj_sample(k, eta, rng) {
                theta[rho_off..].copy_from_slice(&m.entries());
            }
            theta
        }));
        Ok(parts)
    }
}

fn corr_from_entries(k: usize, entries: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::identity(k, k);
    for (&(i, j), &r) in pair_list(k).iter().zip(entries) {
        m[(i, j)] = r;
        m[(j, i)] = r;
    }
    m
}

fn log_det_entries(k: usize, entries: &[f64]) -> f64 {
    match corr_from_entries(k, entries).cholesky() {
        Some(ch) => 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => f64::NEG_INFINITY,
    }
}

/// Sample size, mean and scatter matrix of the observations.
struct SuffStats {
    n: f64,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
}

impl SuffStats {
    fn new(k: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let bad: Vec<usize> = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.len() != k || r.iter().any(|x| !x.is_finite()))
            .map(|(i, _)| i + 1)
            .collect();
        if !bad.is_empty() {
            return Err(LapError::Ingestion {
                message: format!("rows must hold {k} finite values"),
                rows: bad,
            });
        }
        let n = rows.len() as f64;
        let mut mean = DVector::zeros(k);
        for r in rows {
            mean += DVector::from_column_slice(r);
        }
        if n > 0.0 {
            mean /= n;
        }
        let mut scatter = DMatrix::zeros(k, k);
        for r in rows {
            let d = DVector::from_column_slice(r) - &mean;
            scatter += &d * d.transpose();
        }
        Ok(Self { n, mean, scatter })
    }

    fn log_likelihood(&self, mu: &[f64], tau: &[f64], rho: &[f64]) -> f64 {
        let k = mu.len();
        let Some(ch) = corr_from_entries(k, rho).cholesky() else {
            return f64::NEG_INFINITY;
        };
        let log_det_corr = 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_det_cov = log_det_corr - tau.iter().map(|t| t.ln()).sum::<f64>();
        let s: DVector<f64> = DVector::from_iterator(k, tau.iter().map(|t| t.sqrt()));
        // precision = S R^-1 S with S = diag(sqrt(tau))
        let r_inv = ch.inverse();
        let prec = DMatrix::from_fn(k, k, |i, j| s[i] * r_inv[(i, j)] * s[j]);
        let d = &self.mean - DVector::from_column_slice(mu);
        let quad = (&prec * &self.scatter).trace() + self.n * d.dot(&(&prec * &d));
        -0.5 * self.n * (k as f64 * (2.0 * PI).ln() + log_det_cov) - 0.5 * quad
    }
}

/// Reads MVN observations from CSV with one named column per component.
pub fn read_mvn_csv<R: std::io::Read>(reader: R, k: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let width = rdr.headers()?.len();
    if width != k {
        return Err(LapError::Ingestion {
            message: format!("expected {k} columns, found {width}"),
            rows: vec![1],
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match vals {
            Ok(v) if v.len() == k => rows.push(v),
            _ => {
                return Err(LapError::Ingestion {
                    message: format!("row {} is not {k} numbers", i + 2),
                    rows: vec![i + 2],
                })
            }
        }
    }
    Ok(rows)
}

/// Validates that elicited correlations form a positive-definite matrix.
pub fn elicited_matrix(model: &MvnElicitationModel) -> Result<CorrelationMatrix> {
    let mut entries = vec![0.0; n_pairs(model.k)];
    for (idx, r) in model.elicited()? {
        entries[idx] = r;
    }
    CorrelationMatrix::from_entries(model.k, &entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::assemble_target;
    use crate::math::special::student_t_ln_pdf;

    fn elicited_model() -> MvnElicitationModel {
        let mut m = MvnElicitationModel::new(4, 10.0);
        m.marginals = vec![
            MarginalInput::Quantiles { q50: 5.0, q75: 6.35 },
            MarginalInput::Quantiles { q50: 2.0, q75: 2.67 },
            MarginalInput::Quantiles { q50: 1.0, q75: 1.34 },
            MarginalInput::Quantiles { q50: 3.0, q75: 5.02 },
        ];
        let ps = [0.60, 0.25, 0.40, 0.50, 0.50, 0.50];
        m.concordances = pair_list(4)
            .iter()
            .zip(ps)
            .map(|(&(i, j), p)| ConcordanceInput::from_p(i + 1, j + 1, p))
            .collect();
        m
    }

    #[test]
    fn elicited_model_assembles() {
        let target = assemble_target(elicited_model().parts().unwrap(), &[]).unwrap();
        assert_eq!(target.dim(), 4 + 4 + 6);
        assert_eq!(target.loss_terms().len(), 6);
        assert!(target.log_density(&vec![0.0; 14]).is_finite());
        assert!(target.observable_names().contains(&"concordance[1,3]".to_string()));
    }

    #[test]
    fn likelihood_matches_direct_mvn() {
        let rows = vec![vec![1.0, 2.0], vec![0.5, -1.0], vec![2.0, 0.3]];
        let stats = SuffStats::new(2, &rows).unwrap();
        let (mu, tau, r): ([f64; 2], [f64; 2], f64) = ([0.2, 0.1], [2.0, 0.5], 0.4);
        let (s1, s2) = (1.0 / tau[0].sqrt(), 1.0 / tau[1].sqrt());
        let cov = DMatrix::from_row_slice(2, 2, &[s1 * s1, r * s1 * s2, r * s1 * s2, s2 * s2]);
        let inv = cov.clone().try_inverse().unwrap();
        let direct: f64 = rows
            .iter()
            .map(|x| {
                let d = DVector::from_vec(vec![x[0] - mu[0], x[1] - mu[1]]);
                -(2.0 * PI).ln() - 0.5 * cov.determinant().ln() - 0.5 * d.dot(&(&inv * &d))
            })
            .sum();
        assert!((stats.log_likelihood(&mu, &tau, &[r]) - direct).abs() < 1e-10);
    }

    #[test]
    fn ng_prior_marginal_is_student_t() {
        let h = fit_student_t_hyperparams(5.0, 6.35, 10.0).unwrap();
        let mut m = MvnElicitationModel::new(2, 10.0);
        m.marginals = vec![MarginalInput::Hyper(h), MarginalInput::Hyper(h)];
        m.flattening = Flattening::None;
        let parts = m.parts().unwrap();
        // integrate tau_1 out at fixed mu_1; component 2 is held at a constant point
        let x = 6.1;
        let c2 = gamma_ln_pdf(1.0, h.alpha_ng, h.beta_ng) + normal_ln_pdf(0.0, h.mu0, h.gamma_ng.sqrt().recip());
        let f = |tau: f64| ((parts.log_prior)(&[x, 0.0, tau, 1.0, 0.0]) - c2).exp();
        let dens = crate::math::quad::integrate(f, 0.0, f64::INFINITY, 1e-12);
        let scale = (h.beta_ng / (h.alpha_ng * h.gamma_ng)).sqrt();
        let want = (student_t_ln_pdf((x - h.mu0) / scale, 2.0 * h.alpha_ng) - scale.ln()).exp();
        assert!((dens - want).abs() < 1e-8 * want.max(1.0), "{dens} vs {want}");
    }

    #[test]
    fn bad_pair_rejected() {
        let mut m = MvnElicitationModel::new(3, 10.0);
        m.concordances = vec![ConcordanceInput::from_p(1, 4, 0.6)];
        assert!(matches!(m.parts(), Err(LapError::Config(_))));
    }

    #[test]
    fn incoherent_inputs_warn() {
        let mut m = MvnElicitationModel::new(3, 10.0);
        m.concordances = vec![
            ConcordanceInput { pair: (1, 2), p: None, r: Some(0.9) },
            ConcordanceInput { pair: (1, 3), p: None, r: Some(-0.5) },
            ConcordanceInput { pair: (2, 3), p: None, r: Some(0.9) },
        ];
        let parts = m.parts().unwrap();
        assert!(parts.warnings.iter().any(|w| w.contains("(1,3)")));
    }
}

//! Elicitation sessions: inputs, derived hypers and coherency, revisions.

use std::time::{SystemTime, UNIX_EPOCH};

use lap_core::math::corr::{n_pairs, pair_list};
use lap_core::models::{
    ConcordanceInput, DataSource, ExponentialSurvivalModel, MarginalInput, ModelDocument, ModelSpec,
    MvnElicitationModel, RepeatedMeasuresModel,
};
use lap_core::solvers::{coherency_reports, fit_student_t_hyperparams, CoherencyReport, NormalGammaHyper};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, FieldError};

pub const MAX_K: usize = 12;

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionFamily {
    Mvn,
    Exponential,
    RepeatedMeasures,
}

/// Predictive quantile answer for one 1-based component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalAnswer {
    pub component: usize,
    pub q50: f64,
    pub q75: f64,
}

/// Everything the expert supplied. Derived state is a function of this alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInputs {
    pub family: SessionFamily,
    #[serde(default)]
    pub k: usize,
    #[serde(default)]
    pub n_e: f64,
    #[serde(default)]
    pub marginals: Vec<MarginalAnswer>,
    #[serde(default)]
    pub concordances: Vec<ConcordanceInput>,
    /// Model and beliefs for the exponential and repeated-measures families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<ModelDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictive {
    pub mu: f64,
    pub scale: f64,
    pub df: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvedHyper {
    pub component: usize,
    pub q50: f64,
    pub q75: f64,
    #[serde(flatten)]
    pub hyper: NormalGammaHyper,
    pub predictive: Predictive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherencyState {
    /// True when every pair has an answer; reports are only computed then.
    pub complete: bool,
    pub missing_pairs: Vec<(usize, usize)>,
    pub reports: Vec<CoherencyReport>,
    /// 1-based index sets of non positive definite principal minors.
    pub incoherent_minors: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub number: u64,
    pub at_ms: u64,
    pub change: String,
    pub inputs: SessionInputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRef {
    pub id: String,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub created_ms: u64,
    pub updated_ms: u64,
    pub revision: u64,
    pub inputs: SessionInputs,
    pub hypers: Vec<SolvedHyper>,
    pub coherency: CoherencyState,
    pub jobs: Vec<JobRef>,
    pub revisions: Vec<Revision>,
}

/// Body of `POST /sessions`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub family: SessionFamily,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub n_e: Option<f64>,
    #[serde(default)]
    pub document: Option<ModelDocument>,
}

impl CreateSession {
    pub fn into_inputs(self) -> Result<SessionInputs, ApiError> {
        let mut errors = Vec::new();
        let (k, n_e) = match self.family {
            SessionFamily::Mvn => {
                let k = self.k.unwrap_or(0);
                if !(2..=MAX_K).contains(&k) {
                    errors.push(FieldError::new("k", format!("k must be between 2 and {MAX_K}")));
                }
                let n_e = self.n_e.unwrap_or(f64::NAN);
                if !(n_e > 0.0 && n_e.is_finite()) {
                    errors.push(FieldError::new("n_e", "n_e must be a positive number"));
                }
                if self.document.is_some() {
                    errors.push(FieldError::new("document", "mvn sessions are built from marginal and concordance answers"));
                }
                (k, n_e)
            }
            _ => (self.k.unwrap_or(0), self.n_e.unwrap_or(0.0)),
        };
        let document = match self.family {
            SessionFamily::Mvn => None,
            family => {
                let doc = self.document.unwrap_or_else(|| default_document(family));
                let matches = matches!(
                    (family, &doc.model),
                    (SessionFamily::Exponential, ModelSpec::Exponential(_))
                        | (SessionFamily::RepeatedMeasures, ModelSpec::RepeatedMeasures(_))
                );
                if !matches {
                    errors.push(FieldError::new("document.model.family", "model family differs from the session family"));
                }
                if matches!(doc.data, Some(DataSource::Path(_))) {
                    errors.push(FieldError::new("document.data", "data must be given inline"));
                }
                Some(doc)
            }
        };
        if !errors.is_empty() {
            return Err(ApiError::invalid("invalid session", errors));
        }
        Ok(SessionInputs { family: self.family, k, n_e, marginals: Vec::new(), concordances: Vec::new(), document })
    }
}

fn default_document(family: SessionFamily) -> ModelDocument {
    let model = match family {
        SessionFamily::RepeatedMeasures => ModelSpec::RepeatedMeasures(RepeatedMeasuresModel::default()),
        _ => ModelSpec::Exponential(ExponentialSurvivalModel::default()),
    };
    ModelDocument { model, beliefs: Vec::new(), data: None, sampler: None }
}

fn require_mvn(inputs: &SessionInputs, what: &str) -> Result<(), ApiError> {
    if inputs.family != SessionFamily::Mvn {
        return Err(ApiError::field("family", format!("{what} apply to mvn sessions only")));
    }
    Ok(())
}

/// Checks marginal answers and solves each for NormalGamma hyperparameters.
pub fn solve_marginals(inputs: &SessionInputs, answers: &[MarginalAnswer]) -> Result<Vec<SolvedHyper>, ApiError> {
    require_mvn(inputs, "marginals")?;
    let mut errors = Vec::new();
    let mut solved = Vec::new();
    for (n, a) in answers.iter().enumerate() {
        if a.component < 1 || a.component > inputs.k {
            errors.push(FieldError::new(format!("marginals[{n}].component"), format!("must be in 1..={}", inputs.k)));
            continue;
        }
        if answers[..n].iter().any(|b| b.component == a.component) {
            errors.push(FieldError::new(format!("marginals[{n}].component"), "component answered twice"));
            continue;
        }
        let fit = fit_student_t_hyperparams(a.q50, a.q75, inputs.n_e).and_then(|h| Ok((h, h.predictive()?)));
        match fit {
            Ok((hyper, t)) => solved.push(SolvedHyper {
                component: a.component,
                q50: a.q50,
                q75: a.q75,
                hyper,
                predictive: Predictive { mu: t.mu, scale: t.scale(), df: t.df },
            }),
            Err(e) => errors.push(FieldError::new(format!("marginals[{n}]"), e)),
        }
    }
    if !errors.is_empty() {
        return Err(ApiError::invalid("invalid marginal answers", errors));
    }
    solved.sort_by_key(|s| s.component);
    Ok(solved)
}

/// Checks concordance answers and computes per-pair coherency intervals
/// once every pair is answered. Incoherent answers are reported, not rejected.
pub fn assess_concordances(inputs: &SessionInputs, answers: &[ConcordanceInput]) -> Result<CoherencyState, ApiError> {
    require_mvn(inputs, "concordances")?;
    let k = inputs.k;
    let pairs = pair_list(k);
    let mut entries: Vec<Option<f64>> = vec![None; n_pairs(k)];
    let mut errors = Vec::new();
    for (n, c) in answers.iter().enumerate() {
        let (i, j) = c.pair;
        let Some(idx) = pairs.iter().position(|&(a, b)| (a + 1, b + 1) == (i.min(j), i.max(j))).filter(|_| i >= 1) else {
            errors.push(FieldError::new(format!("concordances[{n}].pair"), format!("not a pair of distinct components in 1..={k}")));
            continue;
        };
        if entries[idx].is_some() {
            errors.push(FieldError::new(format!("concordances[{n}].pair"), "pair answered twice"));
            continue;
        }
        match c.correlation() {
            Ok(r) => entries[idx] = Some(r),
            Err(e) => errors.push(FieldError::new(format!("concordances[{n}]"), e)),
        }
    }
    if !errors.is_empty() {
        return Err(ApiError::invalid("invalid concordance answers", errors));
    }
    Ok(coherency_of(k, &entries))
}

fn coherency_of(k: usize, entries: &[Option<f64>]) -> CoherencyState {
    let missing_pairs: Vec<(usize, usize)> = pair_list(k)
        .into_iter()
        .zip(entries)
        .filter(|(_, e)| e.is_none())
        .map(|((i, j), _)| (i + 1, j + 1))
        .collect();
    let mut state = CoherencyState { complete: missing_pairs.is_empty(), missing_pairs, reports: Vec::new(), incoherent_minors: Vec::new() };
    if state.complete && k >= 2 {
        let full: Vec<f64> = entries.iter().map(|e| e.unwrap_or(0.0)).collect();
        if let Ok((reports, minors)) = coherency_reports(k, &full) {
            state.reports = reports;
            state.incoherent_minors = minors;
        }
    }
    state
}

impl Session {
    pub fn new(id: String, inputs: SessionInputs) -> Result<Self, ApiError> {
        let now = now_ms();
        let (hypers, coherency) = derive(&inputs)?;
        Ok(Self {
            id,
            created_ms: now,
            updated_ms: now,
            revision: 1,
            revisions: vec![Revision { number: 1, at_ms: now, change: "create".into(), inputs: inputs.clone() }],
            inputs,
            hypers,
            coherency,
            jobs: Vec::new(),
        })
    }

    /// Records a new input snapshot and recomputes derived state.
    pub fn apply(&mut self, change: &str, inputs: SessionInputs) -> Result<(), ApiError> {
        let (hypers, coherency) = derive(&inputs)?;
        let now = now_ms();
        self.revision += 1;
        self.revisions.push(Revision { number: self.revision, at_ms: now, change: change.into(), inputs: inputs.clone() });
        self.inputs = inputs;
        self.hypers = hypers;
        self.coherency = coherency;
        self.updated_ms = now;
        Ok(())
    }

    /// Derived state rebuilt from the revision history alone.
    pub fn replay(&self) -> Result<(Vec<SolvedHyper>, CoherencyState), ApiError> {
        let last = self.revisions.last().ok_or_else(|| ApiError::internal("session has no revisions"))?;
        derive(&last.inputs)
    }

    pub fn is_stale(&self, job_revision: u64) -> bool {
        job_revision < self.revision
    }

    /// Model document a sampling job runs for the current inputs.
    pub fn job_document(&self) -> Result<ModelDocument, ApiError> {
        match self.inputs.family {
            SessionFamily::Mvn => {
                let mut model = MvnElicitationModel::new(self.inputs.k, self.inputs.n_e);
                let defaults = model.hypers()?;
                model.marginals = (1..=self.inputs.k)
                    .map(|c| match self.inputs.marginals.iter().find(|m| m.component == c) {
                        Some(m) => MarginalInput::Quantiles { q50: m.q50, q75: m.q75 },
                        None => MarginalInput::Hyper(defaults[c - 1]),
                    })
                    .collect();
                model.concordances = self.inputs.concordances.clone();
                Ok(ModelDocument { model: ModelSpec::Mvn(model), beliefs: Vec::new(), data: None, sampler: None })
            }
            _ => self.inputs.document.clone().ok_or_else(|| ApiError::internal("session has no model document")),
        }
    }
}

fn derive(inputs: &SessionInputs) -> Result<(Vec<SolvedHyper>, CoherencyState), ApiError> {
    if inputs.family != SessionFamily::Mvn {
        return Ok((Vec::new(), coherency_of(0, &[])));
    }
    let hypers = solve_marginals(inputs, &inputs.marginals)?;
    let coherency = assess_concordances(inputs, &inputs.concordances)?;
    Ok((hypers, coherency))
}

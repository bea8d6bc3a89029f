//! Reference models and the JSON model document that selects one.

pub mod exponential;
pub mod mvn;
pub mod regression;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use exponential::{
    dap_density_median_survival, exponential_loss_only_target, ExponentialSurvivalModel, GammaPrior, Parameterization,
    SurvivalRecord,
};
pub use mvn::{elicited_matrix, read_mvn_csv, ConcordanceInput, Flattening, MarginalInput, MvnElicitationModel};
pub use regression::{
    orthogonal_poly, read_rm_csv, synthetic_repeated_measures, write_rm_csv, RepeatedMeasuresModel, RmRecord,
    SyntheticSpec,
};

use crate::error::{LapError, Result};
use crate::loss::{assemble_target, ExpertBelief, TargetDensity};
use crate::sampler::SamplerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Exponential(ExponentialSurvivalModel),
    Mvn(MvnElicitationModel),
    RepeatedMeasures(RepeatedMeasuresModel),
}

/// Data given inline or as a CSV path (relative to the document).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Path(String),
    Inline(serde_json::Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub model: ModelSpec,
    #[serde(default)]
    pub beliefs: Vec<ExpertBelief>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
}

impl ModelDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LapError::Config(format!("model document: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Model with any external or inline data merged in.
    pub fn resolved_model(&self, base_dir: &Path) -> Result<ModelSpec> {
        let mut model = self.model.clone();
        let Some(source) = &self.data else {
            return Ok(model);
        };
        match source {
            DataSource::Path(p) => {
                let file = std::fs::File::open(base_dir.join(p))?;
                attach_csv(&mut model, file)?;
            }
            DataSource::Inline(v) => attach_inline(&mut model, v.clone())?,
        }
        Ok(model)
    }
}

/// Replaces the model's data with CSV read from `reader`.
pub fn attach_csv<R: std::io::Read>(model: &mut ModelSpec, reader: R) -> Result<()> {
    match model {
        ModelSpec::Exponential(m) => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
            let mut out = Vec::new();
            let mut bad = Vec::new();
            for (i, rec) in rdr.deserialize::<SurvivalCsvRow>().enumerate() {
                match rec {
                    Ok(r) => out.push(SurvivalRecord { time: r.time, event: r.event != 0 }),
                    Err(_) => bad.push(i + 2),
                }
            }
            if !bad.is_empty() {
                return Err(LapError::Ingestion {
                    message: "survival rows need numeric `time` and 0/1 `event`".into(),
                    rows: bad,
                });
            }
            m.data = out;
        }
        ModelSpec::Mvn(m) => m.data = Some(read_mvn_csv(reader, m.k)?),
        ModelSpec::RepeatedMeasures(m) => m.data = read_rm_csv(reader)?,
    }
    Ok(())
}

#[derive(Deserialize)]
struct SurvivalCsvRow {
    time: f64,
    event: u8,
}

fn attach_inline(model: &mut ModelSpec, v: serde_json::Value) -> Result<()> {
    let bad = |e: serde_json::Error| LapError::Config(format!("inline data: {e}"));
    match model {
        ModelSpec::Exponential(m) => m.data = serde_json::from_value(v).map_err(bad)?,
        ModelSpec::Mvn(m) => m.data = Some(serde_json::from_value(v).map_err(bad)?),
        ModelSpec::RepeatedMeasures(m) => m.data = serde_json::from_value(v).map_err(bad)?,
    }
    Ok(())
}

impl ModelSpec {
    pub fn parts(&self) -> Result<crate::loss::ModelParts> {
        match self {
            ModelSpec::Exponential(m) => m.parts(),
            ModelSpec::Mvn(m) => m.parts(),
            ModelSpec::RepeatedMeasures(m) => m.parts(),
        }
    }
}

/// Target density for a model document; data paths resolve against `base_dir`.
pub fn build_target(doc: &ModelDocument, base_dir: &Path) -> Result<TargetDensity> {
    let model = doc.resolved_model(base_dir)?;
    assemble_target(model.parts()?, &doc.beliefs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn document_parses_all_families() {
        let docs = [
            r#"{"model": {"family": "exponential", "parameterization": "rate_with_correction"},
                "beliefs": [{"observable": "t_med", "family": "lognormal", "params": {"mu": -0.32, "sigma": 0.34}}]}"#,
            r#"{"model": {"family": "mvn", "k": 2, "n_e": 10, "concordances": [{"pair": [1, 2], "p": 0.6}]},
                "data": [[1.0, 2.0], [0.0, 1.0]]}"#,
            r#"{"model": {"family": "repeated_measures"},
                "beliefs": [{"observable": "xi", "family": "normal", "params": {"mu": 2.5, "sigma": 1.5}}],
                "sampler": {"n_chains": 2, "seed": 7}}"#,
        ];
        for d in docs {
            let doc = ModelDocument::from_json(d).unwrap();
            let target = build_target(&doc, Path::new(".")).unwrap();
            assert!(target.log_density(&vec![0.0; target.dim()]).is_finite(), "{d}");
        }
    }

    #[test]
    fn unknown_observable_is_config_error() {
        let doc = ModelDocument::from_json(
            r#"{"model": {"family": "exponential"},
                "beliefs": [{"observable": "nope", "family": "normal", "params": {"mu": 0, "sigma": 1}}]}"#,
        )
        .unwrap();
        assert!(matches!(build_target(&doc, Path::new(".")), Err(LapError::Config(_))));
    }

    #[test]
    fn survival_csv() {
        let mut m = ModelSpec::Exponential(ExponentialSurvivalModel::default());
        attach_csv(&mut m, "time,event\n1.5,1\n2.0,0\n".as_bytes()).unwrap();
        let ModelSpec::Exponential(e) = m else { unreachable!() };
        assert_eq!(e.data.len(), 2);
        assert!(!e.data[1].event);
    }
}

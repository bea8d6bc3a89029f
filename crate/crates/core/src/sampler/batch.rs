use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::SamplerConfig;
use super::diagnostics::{diagnose, DiagnosticsReport};
use crate::error::Result;

/// Post-warmup draws on the constrained scale, one block per chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub param_names: Vec<String>,
    pub observable_names: Vec<String>,
    pub config: SamplerConfig,
    /// `draws[chain]` is row-major `samples x params`.
    pub draws: Vec<Vec<f64>>,
    /// `observables[chain]` is row-major `samples x observables`.
    pub observables: Vec<Vec<f64>>,
    pub acceptance: Vec<f64>,
    pub proposal_scale: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SampleBatch {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        param_names: Vec<String>,
        observable_names: Vec<String>,
        config: SamplerConfig,
        draws: Vec<Vec<f64>>,
        observables: Vec<Vec<f64>>,
        acceptance: Vec<f64>,
        proposal_scale: Vec<f64>,
        warnings: Vec<String>,
    ) -> Self {
        Self { param_names, observable_names, config, draws, observables, acceptance, proposal_scale, warnings }
    }

    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn n_samples(&self) -> usize {
        let d = self.param_names.len();
        if d == 0 || self.draws.is_empty() {
            0
        } else {
            self.draws[0].len() / d
        }
    }

    /// Parameter names followed by observable names.
    pub fn names(&self) -> Vec<String> {
        self.param_names.iter().chain(&self.observable_names).cloned().collect()
    }

    /// Trace of `name` split by chain.
    pub fn chain_columns(&self, name: &str) -> Option<Vec<Vec<f64>>> {
        if let Some(i) = self.param_names.iter().position(|n| n == name) {
            let d = self.param_names.len();
            return Some(self.draws.iter().map(|c| c.iter().skip(i).step_by(d).copied().collect()).collect());
        }
        let i = self.observable_names.iter().position(|n| n == name)?;
        let d = self.observable_names.len();
        Some(self.observables.iter().map(|c| c.iter().skip(i).step_by(d).copied().collect()).collect())
    }

    /// Trace of `name` with chains concatenated.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.chain_columns(name).map(|c| c.concat())
    }

    pub fn diagnostics(&self) -> DiagnosticsReport {
        let names = self.names();
        let traces: Vec<Vec<Vec<f64>>> = names.iter().map(|n| self.chain_columns(n).unwrap_or_default()).collect();
        diagnose(&names, &traces, &self.acceptance)
    }

    /// `chain,iter,<params>,<observables>` with 1-based chain and iteration.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["chain".to_string(), "iter".to_string()];
        header.extend(self.names());
        w.write_record(&header)?;
        let d = self.param_names.len();
        let k = self.observable_names.len();
        let mut row = Vec::with_capacity(d + k + 2);
        for (c, (draws, obs)) in self.draws.iter().zip(&self.observables).enumerate() {
            for s in 0..self.n_samples() {
                row.clear();
                row.push((c + 1).to_string());
                row.push((s + 1).to_string());
                row.extend(draws[s * d..(s + 1) * d].iter().map(|v| v.to_string()));
                row.extend(obs[s * k..(s + 1) * k].iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{LapError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub warmup: usize,
    pub samples: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    pub init_jitter: f64,
    /// Keep every `thin`-th post-warmup iteration.
    pub thin: usize,
    pub adapt: bool,
    /// Run chains on the rayon pool; results do not depend on this.
    pub parallel: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            warmup: 2000,
            samples: 5000,
            seed: 0,
            target_acceptance: 0.234,
            init_jitter: 1.0,
            thin: 1,
            adapt: true,
            parallel: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(LapError::Config("n_chains must be at least 1".into()));
        }
        if self.samples == 0 || self.thin == 0 {
            return Err(LapError::Config("samples and thin must be positive".into()));
        }
        if self.adapt && self.warmup < 100 {
            return Err(LapError::Config("warmup must be at least 100 when adaptation is on".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(LapError::Config("target_acceptance must be in (0, 1)".into()));
        }
        if !(self.init_jitter > 0.0) || !self.init_jitter.is_finite() {
            return Err(LapError::Config("init_jitter must be positive".into()));
        }
        Ok(())
    }
}

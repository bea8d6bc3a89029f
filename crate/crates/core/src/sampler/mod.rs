//! Adaptive random-walk Metropolis with convergence diagnostics.

pub mod batch;
pub mod config;
pub mod diagnostics;
pub mod rwm;
pub mod stats;

pub use batch::SampleBatch;
pub use config::SamplerConfig;
pub use diagnostics::{diagnose, ess_bulk, split_rhat, DiagnosticsReport, ParamDiagnostics};
pub use rwm::{chain_rng, run_chains, run_chains_with_progress};
pub use stats::{
    grid_quantile, kde_at, kde_grid, ks_statistic, mean, quantile_match, quantiles, variance, DensityGrid, QuantileMatch, KDE_POINTS,
};

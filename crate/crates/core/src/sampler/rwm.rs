//! Adaptive random-walk Metropolis.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::batch::SampleBatch;
use super::config::SamplerConfig;
use crate::error::{LapError, Result};
use crate::loss::TargetDensity;

const MAX_INIT_ATTEMPTS: usize = 100;
const FIRST_WINDOW: usize = 25;
const MAX_WINDOW: usize = 100;

/// Independent stream per chain.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

struct ChainOutput {
    draws: Vec<f64>,
    observables: Vec<f64>,
    acceptance: f64,
    scale: f64,
}

/// Running mean and scatter (Welford).
struct Moments {
    n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Self { n: 0, mean: DVector::zeros(d), m2: DMatrix::zeros(d, d) }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let x = DVector::from_column_slice(x);
        let delta = &x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = &x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    /// Empirical covariance shrunk towards a small multiple of the identity.
    fn regularized(&self) -> DMatrix<f64> {
        let d = self.mean.len();
        let n = self.n as f64;
        let cov = &self.m2 / (n - 1.0);
        cov * (n / (n + 5.0)) + DMatrix::identity(d, d) * (1e-3 * 5.0 / (n + 5.0) + 1e-6)
    }
}

/// End points (exclusive) of the covariance-estimation windows.
fn window_ends(warmup: usize) -> Vec<usize> {
    let start = (warmup * 15 / 100).min(75);
    let end = warmup - warmup / 10;
    let mut ends = Vec::new();
    let mut size = FIRST_WINDOW;
    let mut at = start;
    while at + size < end {
        let next = at + size;
        // fold a short remainder into the last window
        if end - next < 2 * size {
            break;
        }
        ends.push(next);
        at = next;
        size = (size * 2).min(MAX_WINDOW);
    }
    if end > start {
        ends.push(end);
    }
    ends
}

fn initialize(target: &TargetDensity, cfg: &SamplerConfig, rng: &mut ChaCha8Rng, theta: &mut [f64]) -> Result<(Vec<f64>, f64)> {
    let d = target.dim();
    for _ in 0..MAX_INIT_ATTEMPTS {
        let u: Vec<f64> = (0..d).map(|_| cfg.init_jitter * rng.sample::<f64, _>(StandardNormal)).collect();
        let lp = target.log_density_with(&u, theta);
        if lp.is_finite() {
            return Ok((u, lp));
        }
    }
    Err(LapError::Initialization { attempts: MAX_INIT_ATTEMPTS })
}

fn run_chain(
    target: &TargetDensity,
    cfg: &SamplerConfig,
    chain: usize,
    progress: &(dyn Fn(usize) + Sync),
) -> Result<ChainOutput> {
    let d = target.dim();
    let n_obs = target.observable_names().len();
    let mut rng = chain_rng(cfg.seed, chain);
    let mut theta = vec![0.0; d];
    let (mut u, mut lp) = initialize(target, cfg, &mut rng, &mut theta)?;

    let base_log_scale = (2.38 / (d as f64).sqrt()).ln();
    let mut log_scale = base_log_scale;
    let mut chol = DMatrix::<f64>::identity(d, d);
    let mut history: Vec<f64> = Vec::new();
    let windows = window_ends(cfg.warmup);
    let cov_start = (cfg.warmup * 15 / 100).min(75);
    let mut window_idx = 0;
    let mut rm_t = 0usize;
    let mut warm_accepts = 0usize;

    let total_iter = cfg.warmup + cfg.samples * cfg.thin;
    let mut draws = Vec::with_capacity(cfg.samples * d);
    let mut observables = Vec::with_capacity(cfg.samples * n_obs);
    let mut accepts = 0usize;
    let mut z = vec![0.0; d];
    let mut prop = vec![0.0; d];

    for it in 0..total_iter {
        let warm = it < cfg.warmup;
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let s = log_scale.exp();
        for r in 0..d {
            let mut acc = 0.0;
            for c in 0..=r {
                acc += chol[(r, c)] * z[c];
            }
            prop[r] = u[r] + s * acc;
        }
        let lp_prop = target.log_density_with(&prop, &mut theta);
        let log_ratio = lp_prop - lp;
        let accept_prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
        let uniform: f64 = rng.random();
        let accepted = lp_prop.is_finite() && uniform < accept_prob;
        if accepted {
            u.copy_from_slice(&prop);
            lp = lp_prop;
        }

        if warm {
            if accepted {
                warm_accepts += 1;
            }
            if cfg.adapt {
                rm_t += 1;
                let a = if lp_prop.is_finite() { accept_prob } else { 0.0 };
                log_scale += (a - cfg.target_acceptance) / (rm_t as f64).powf(0.6);
                log_scale = log_scale.clamp(base_log_scale - 15.0, base_log_scale + 5.0);
                if it >= cov_start && window_idx < windows.len() {
                    history.extend_from_slice(&u);
                    if it + 1 == windows[window_idx] {
                        window_idx += 1;
                        // covariance of the later half of the adaptive history
                        let rows = history.len() / d;
                        let mut moments = Moments::new(d);
                        for row in history[(rows / 2) * d..].chunks(d) {
                            moments.push(row);
                        }
                        if moments.n > d + 1 {
                            if let Some(ch) = moments.regularized().cholesky() {
                                chol = ch.l();
                                log_scale = base_log_scale;
                                rm_t = 0;
                            }
                        }
                    }
                }
            }
            if it + 1 == cfg.warmup && warm_accepts == 0 {
                return Err(LapError::Adaptation { chain: chain + 1 });
            }
        } else {
            if accepted {
                accepts += 1;
            }
            let k = it - cfg.warmup;
            if (k + 1) % cfg.thin == 0 {
                // recompute constrained values of the current state
                target.space().constrain(&u, &mut theta);
                draws.extend_from_slice(&theta);
                observables.extend(target.observables(&theta));
            }
        }
        if (it + 1) % 100 == 0 || it + 1 == total_iter {
            progress(if (it + 1) % 100 == 0 { 100 } else { (it + 1) % 100 });
        }
    }
    let post = (cfg.samples * cfg.thin) as f64;
    Ok(ChainOutput { draws, observables, acceptance: accepts as f64 / post, scale: log_scale.exp() })
}

/// Runs `config.n_chains` chains and collects constrained draws plus
/// observable traces.
pub fn run_chains(target: &TargetDensity, config: &SamplerConfig) -> Result<SampleBatch> {
    run_chains_with_progress(target, config, &|_| {})
}

/// As [`run_chains`], reporting the completed fraction of all iterations.
pub fn run_chains_with_progress(
    target: &TargetDensity,
    config: &SamplerConfig,
    on_progress: &(dyn Fn(f64) + Sync),
) -> Result<SampleBatch> {
    config.validate()?;
    let total = (config.n_chains * (config.warmup + config.samples * config.thin)) as f64;
    let done = AtomicUsize::new(0);
    let tick = |n: usize| {
        let v = done.fetch_add(n, Ordering::Relaxed) + n;
        on_progress(v as f64 / total);
    };
    let outputs: Vec<Result<ChainOutput>> = if config.parallel {
        (0..config.n_chains).into_par_iter().map(|c| run_chain(target, config, c, &tick)).collect()
    } else {
        (0..config.n_chains).map(|c| run_chain(target, config, c, &tick)).collect()
    };
    let mut chains = Vec::with_capacity(config.n_chains);
    for o in outputs {
        chains.push(o?);
    }
    Ok(SampleBatch::new(
        target.param_names(),
        target.observable_names(),
        config.clone(),
        chains.iter().map(|c| c.draws.clone()).collect(),
        chains.iter().map(|c| c.observables.clone()).collect(),
        chains.iter().map(|c| c.acceptance).collect(),
        chains.iter().map(|c| c.scale).collect(),
        target.warnings().to_vec(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_grow_and_fill_warmup() {
        let w = window_ends(2000);
        assert_eq!(w[0], 100);
        assert_eq!(w[1], 150);
        assert_eq!(*w.last().unwrap(), 1800);
        for pair in w.windows(2) {
            assert!(pair[1] > pair[0] && pair[1] - pair[0] <= 3 * MAX_WINDOW);
        }
        assert_eq!(window_ends(100).last(), Some(&90));
    }
}

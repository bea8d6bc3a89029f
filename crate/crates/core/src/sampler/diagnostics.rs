//! Split, rank-normalized R-hat and bulk effective sample size.

use serde::Serialize;

use super::stats::{mean, quantile_sorted, sorted, variance};
use crate::math::special::normal_quantile;

pub const RHAT_THRESHOLD: f64 = 1.01;

/// Each chain cut in two halves (a trailing odd draw is dropped).
fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Replaces draws by normal scores of their pooled ranks (ties averaged).
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut all: Vec<(f64, usize, usize)> = Vec::new();
    for (c, xs) in chains.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            all.push((x, c, i));
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s = all.len() as f64;
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let rank = 0.5 * ((i + 1) + (j + 1)) as f64;
        let z = normal_quantile((rank - 0.375) / (s + 0.25));
        for &(_, c, k) in &all[i..=j] {
            out[c][k] = z;
        }
        i = j + 1;
    }
    out
}

fn rhat_basic(chains: &[Vec<f64>]) -> Option<f64> {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| variance(c)).collect::<Vec<_>>());
    let b = n * variance(&means);
    if !(w > 0.0) {
        return None;
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Some((var_plus / w).sqrt())
}

/// Split R-hat on ranks, the larger of the bulk and folded versions. `None`
/// when it is undefined: fewer than two chains, too few draws, or chains
/// without variation.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.len() < 2 || chains.iter().any(|c| c.len() < 4) {
        return None;
    }
    let split = split_chains(chains);
    let bulk = rhat_basic(&rank_normalize(&split))?;
    let pooled = sorted(&split.concat());
    let med = quantile_sorted(&pooled, 0.5);
    let folded: Vec<Vec<f64>> = split.iter().map(|c| c.iter().map(|x| (x - med).abs()).collect()).collect();
    let tail = rhat_basic(&rank_normalize(&folded)).unwrap_or(bulk);
    Some(bulk.max(tail))
}

fn autocovariance(xs: &[f64], lag: usize) -> f64 {
    let m = mean(xs);
    let n = xs.len();
    let mut s = 0.0;
    for i in 0..n - lag {
        s += (xs[i] - m) * (xs[i + lag] - m);
    }
    s / n as f64
}

/// Effective sample size by Geyer's initial monotone sequence over
/// several chains.
pub fn ess_basic(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len();
    let n = chains.iter().map(|c| c.len()).min()?;
    if n < 4 {
        return None;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = chains.iter().map(|c| variance(c)).collect();
    let w = mean(&vars);
    let var_plus = w * (n as f64 - 1.0) / n as f64 + if m > 1 { variance(&means) } else { 0.0 };
    if !(var_plus > 0.0) {
        return None;
    }
    let rho = |t: usize| -> f64 {
        let acov = chains.iter().map(|c| autocovariance(c, t)).sum::<f64>() / m as f64;
        1.0 - (w - acov) / var_plus
    };
    let mut rhos = vec![1.0];
    let mut t = 1;
    let mut even = 1.0;
    loop {
        if t + 1 >= n - 1 {
            break;
        }
        let odd = rho(t);
        let next = rho(t + 1);
        if even + odd < 0.0 {
            break;
        }
        rhos.push(odd);
        rhos.push(next);
        even = next;
        t += 2;
        if n > 5000 && t > n / 2 {
            break;
        }
    }
    // pairs Gamma_k = rho_2k + rho_2k+1 are made nonincreasing
    let mut pairs: Vec<f64> = rhos.chunks(2).filter(|c| c.len() == 2).map(|c| c[0] + c[1]).collect();
    for k in 1..pairs.len() {
        if pairs[k] > pairs[k - 1] {
            pairs[k] = pairs[k - 1];
        }
    }
    while pairs.last().is_some_and(|&p| p < 0.0) {
        pairs.pop();
    }
    let tau = (-1.0 + 2.0 * pairs.iter().sum::<f64>()).max(1.0 / ((m * n) as f64).log10());
    Some((m * n) as f64 / tau)
}

/// Bulk ESS: split chains, rank-normalized.
pub fn ess_bulk(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.iter().any(|c| c.len() < 8) {
        return None;
    }
    let split = split_chains(chains);
    if split.iter().all(|c| c.iter().all(|&x| x == c[0])) {
        return None;
    }
    ess_basic(&rank_normalize(&split))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamDiagnostics {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub rhat: Option<f64>,
    pub ess_bulk: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub acceptance: Vec<f64>,
    pub rhat_available: bool,
    pub params: Vec<ParamDiagnostics>,
    pub flags: Vec<String>,
}

impl DiagnosticsReport {
    pub fn max_rhat(&self) -> Option<f64> {
        self.params.iter().filter_map(|p| p.rhat).reduce(f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&ParamDiagnostics> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Summaries and convergence checks for named per-chain traces.
pub fn diagnose(names: &[String], traces: &[Vec<Vec<f64>>], acceptance: &[f64]) -> DiagnosticsReport {
    let n_chains = acceptance.len();
    let draws_per_chain = traces.first().and_then(|t| t.first()).map_or(0, |c| c.len());
    let rhat_available = n_chains >= 2;
    let mut flags = Vec::new();
    if !rhat_available {
        flags.push("R-hat unavailable with a single chain".to_string());
    }
    for (c, a) in acceptance.iter().enumerate() {
        if !(0.1..=0.5).contains(a) {
            flags.push(format!("chain {} acceptance rate {a:.3} outside [0.1, 0.5]", c + 1));
        }
    }
    let mut params = Vec::with_capacity(names.len());
    for (name, chains) in names.iter().zip(traces) {
        let pooled = chains.concat();
        let s = sorted(&pooled);
        let rhat = if rhat_available { split_rhat(chains) } else { None };
        if rhat_available {
            match rhat {
                Some(r) if r > RHAT_THRESHOLD => flags.push(format!("{name}: R-hat {r:.4} > {RHAT_THRESHOLD}")),
                None => flags.push(format!("{name}: R-hat undefined (degenerate chains)")),
                _ => {}
            }
        }
        params.push(ParamDiagnostics {
            name: name.clone(),
            mean: mean(&pooled),
            sd: if pooled.len() > 1 { variance(&pooled).sqrt() } else { 0.0 },
            q05: quantile_sorted(&s, 0.05),
            q50: quantile_sorted(&s, 0.5),
            q95: quantile_sorted(&s, 0.95),
            rhat,
            ess_bulk: ess_bulk(chains),
        });
    }
    DiagnosticsReport { n_chains, draws_per_chain, acceptance: acceptance.to_vec(), rhat_available, params, flags }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_chains(seed: u64, m: usize, n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }

    #[test]
    fn independent_chains_converge() {
        let chains = normal_chains(1, 4, 2000);
        let r = split_rhat(&chains).unwrap();
        assert!(r < 1.01, "{r}");
        let ess = ess_bulk(&chains).unwrap();
        assert!(ess > 6000.0 && ess < 10000.0, "{ess}");
    }

    #[test]
    fn offset_chain_is_flagged() {
        let mut chains = normal_chains(2, 4, 1000);
        for x in chains[3].iter_mut() {
            *x += 10.0;
        }
        assert!(split_rhat(&chains).unwrap() > 1.1);
    }

    #[test]
    fn constant_chains_are_degenerate() {
        let chains = vec![vec![1.0; 200]; 4];
        assert!(split_rhat(&chains).is_none());
        assert!(ess_bulk(&chains).is_none());
        let rep = diagnose(&["x".into()], &[chains], &[0.2; 4]);
        assert!(rep.flags.iter().any(|f| f.contains("undefined")));
    }

    #[test]
    fn single_chain_has_no_rhat() {
        let chains = normal_chains(3, 1, 500);
        let rep = diagnose(&["x".into()], &[chains], &[0.3]);
        assert!(!rep.rhat_available);
        assert!(rep.params[0].rhat.is_none());
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // AR(1) with phi = 0.5: ESS / N = (1 - phi) / (1 + phi) = 1/3
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..5000)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        x = 0.5 * x + e * (0.75f64).sqrt();
                        x
                    })
                    .collect()
            })
            .collect();
        let ess = ess_basic(&chains).unwrap();
        assert!((ess / 20000.0 - 1.0 / 3.0).abs() < 0.04, "{ess}");
    }
}

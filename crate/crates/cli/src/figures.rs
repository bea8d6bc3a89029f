//! Plot-ready datasets: CSV files plus a JSON manifest per figure.

use std::fs;
use std::path::{Path, PathBuf};

use lap_core::loss::{assemble_target, ExpertBelief};
use lap_core::math::corr::{lkj_marginal_log_density, pair_list};
use lap_core::math::dist::DistributionSpec;
use lap_core::math::special::{lognormal_ln_pdf, normal_ln_pdf};
use lap_core::models::{
    exponential_loss_only_target, synthetic_repeated_measures, ConcordanceInput, Flattening, MarginalInput,
    MvnElicitationModel, Parameterization, RepeatedMeasuresModel, SyntheticSpec,
};
use lap_core::sampler::{kde_at, kde_grid, mean, run_chains, SampleBatch, SamplerConfig};
use lap_core::solvers::lomax::lomax_beta_for_median;
use lap_core::solvers::{dap_survival_prob, ess_to_tertiles};
use serde_json::{json, Value};

use crate::output::{num, Output};
use crate::{median_grid, survival_grid, CliError};

pub const DEFAULT_SEED: u64 = 7;
/// Seed of the synthetic repeated-measures dataset.
pub const SYNTHETIC_DATA_SEED: u64 = 2024;
const GRID: usize = 512;
/// Warmup for the MVN and regression runs; 2,000 leaves their chains unmixed.
pub const LONG_WARMUP: usize = 20_000;

/// Elicited predictive medians and upper quartiles of the four components.
pub const ELICITED_MARGINALS: [(f64, f64); 4] = [(5.0, 6.35), (2.0, 2.67), (1.0, 1.34), (3.0, 5.02)];
/// Elicited concordances in pair order (1,2), (1,3), (1,4), (2,3), (2,4), (3,4).
pub const ELICITED_CONCORDANCES: [f64; 6] = [0.60, 0.25, 0.40, 0.50, 0.50, 0.50];

pub fn elicited_model() -> MvnElicitationModel {
    let mut m = MvnElicitationModel::new(4, 10.0);
    m.marginals = ELICITED_MARGINALS.iter().map(|&(q50, q75)| MarginalInput::Quantiles { q50, q75 }).collect();
    m.concordances = pair_list(4)
        .iter()
        .zip(ELICITED_CONCORDANCES)
        .map(|(&(i, j), p)| ConcordanceInput::from_p(i + 1, j + 1, p))
        .collect();
    m
}

/// k = 4, eta = 1 and no concordance beliefs.
pub fn lkj_model(flattening: Flattening) -> MvnElicitationModel {
    let mut m = MvnElicitationModel::new(4, 10.0);
    m.flattening = flattening;
    m
}

pub fn sample_mvn(model: &MvnElicitationModel, cfg: &SamplerConfig) -> Result<SampleBatch, CliError> {
    let target = assemble_target(model.parts()?, &[])?;
    Ok(run_chains(&target, cfg)?)
}

/// Correlation draws of every pair, pooled.
pub fn pooled_correlations(batch: &SampleBatch, k: usize) -> Vec<f64> {
    pair_list(k)
        .iter()
        .flat_map(|&(i, j)| batch.column(&format!("rho[{},{}]", i + 1, j + 1)).unwrap_or_default())
        .collect()
}

pub fn expert_xi() -> ExpertBelief {
    ExpertBelief::new("xi", DistributionSpec::normal(2.5, 1.5).expect("valid normal"))
}

pub struct RegressionRuns {
    pub model: RepeatedMeasuresModel,
    pub data_only: SampleBatch,
    pub with_expert: SampleBatch,
}

/// Data-only and data-plus-belief posteriors on the synthetic dataset.
pub fn regression_runs(seed: u64) -> Result<RegressionRuns, CliError> {
    let model = RepeatedMeasuresModel::with_data(synthetic_repeated_measures(&SyntheticSpec::default(), SYNTHETIC_DATA_SEED));
    let cfg = SamplerConfig { seed, warmup: LONG_WARMUP, ..Default::default() };
    let data_only = run_chains(&assemble_target(model.parts()?, &[])?, &cfg)?;
    let with_expert = run_chains(&assemble_target(model.parts()?, &[expert_xi()])?, &cfg)?;
    Ok(RegressionRuns { model, data_only, with_expert })
}

struct Dataset {
    file: String,
    output: Output,
}

fn table(file: &str, columns: &[&str], rows: Vec<Vec<Value>>) -> Dataset {
    Dataset {
        file: file.to_string(),
        output: Output::Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows },
    }
}

fn numeric_rows(cols: &[&[f64]]) -> Vec<Vec<Value>> {
    (0..cols[0].len()).map(|i| cols.iter().map(|c| num(c[i])).collect()).collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn figure_one() -> Result<(Vec<Dataset>, Value), CliError> {
    let median = 1.0;
    let mut rows = Vec::new();
    for ess in [1.0, 10.0, 25.0, 100.0] {
        let t = ess_to_tertiles(ess, median)?;
        rows.push(vec![num(ess), num(lomax_beta_for_median(ess, median)?), num(t.q13), num(t.q23), num(median)]);
    }
    let data = table("fig1.csv", &["ess", "beta", "q13", "q23", "median"], rows);
    let meta = json!({
        "title": "Lomax tertiles for a common median at increasing ESS",
        "x": "ess", "y": ["q13", "q23"], "median": median,
    });
    Ok((vec![data], meta))
}

fn figure_two() -> Result<(Vec<Dataset>, Value), CliError> {
    let (alpha, ytilde, t, gamma) = (10.0, 1.0, 1.0, 0.5);
    let data = Dataset { file: "fig2.csv".into(), output: survival_grid(alpha, ytilde, t, 199)? };
    let meta = json!({
        "title": "Survival probability at t = 1 under the data augmentation prior",
        "x": "s", "y": ["density", "prob_exceed"],
        "alpha": alpha, "ytilde": ytilde, "t": t, "gamma": gamma,
        "tau": dap_survival_prob(alpha, ytilde, t, gamma)?,
    });
    Ok((vec![data], meta))
}

fn figure_three() -> Result<(Vec<Dataset>, Value), CliError> {
    let (alpha, ytilde) = (10.0, 1.0);
    let ln = lap_core::solvers::lognormal_from_ig_median_survival(alpha, ytilde)?;
    let data = Dataset { file: "fig3.csv".into(), output: median_grid(alpha, ytilde, 200)? };
    let meta = json!({
        "title": "Median survival under the data augmentation prior and its lognormal match",
        "x": "t", "y": ["density", "lognormal"],
        "alpha": alpha, "ytilde": ytilde, "lognormal": { "mu": ln.mu, "sigma": ln.sigma },
    });
    Ok((vec![data], meta))
}

fn figure_four(seed: u64) -> Result<(Vec<Dataset>, Value), CliError> {
    let cfg = SamplerConfig { seed, warmup: LONG_WARMUP, thin: 5, ..Default::default() };
    let flat = pooled_correlations(&sample_mvn(&lkj_model(Flattening::MarginalBeta), &cfg)?, 4);
    let raw = pooled_correlations(&sample_mvn(&lkj_model(Flattening::None), &cfg)?, 4);
    let x = linspace(-0.99, 0.99, 199);
    let lkj = x
        .iter()
        .map(|&r| lkj_marginal_log_density(r, 1.0, 4).map(f64::exp))
        .collect::<Result<Vec<_>, _>>()?;
    let data = table(
        "fig4.csv",
        &["x", "lkj_marginal", "flattened", "unflattened"],
        numeric_rows(&[&x, &lkj, &kde_at(&flat, &x)?, &kde_at(&raw, &x)?]),
    );
    let meta = json!({
        "title": "Marginal density of a correlation, k = 4, eta = 1",
        "x": "x", "y": ["lkj_marginal", "flattened", "unflattened"],
        "draws_per_series": flat.len(), "sampler": cfg,
    });
    Ok((vec![data], meta))
}

fn figure_five(seed: u64) -> Result<(Vec<Dataset>, Value), CliError> {
    let (mu, sigma) = (-0.32, 0.34);
    let belief = ExpertBelief::new("t_med", DistributionSpec::lognormal(mu, sigma)?);
    let target = exponential_loss_only_target(belief, Parameterization::MedianDirect)?;
    let cfg = SamplerConfig { seed, samples: 25_000, thin: 20, ..Default::default() };
    let t_med = run_chains(&target, &cfg)?.column("t_med").unwrap_or_default();
    let g = kde_grid(&t_med, GRID)?;
    let pdf: Vec<f64> = g.x.iter().map(|&t| lognormal_ln_pdf(t, mu, sigma).exp()).collect();
    let data = table("fig5.csv", &["t", "posterior", "lognormal"], numeric_rows(&[&g.x, &g.pdf, &pdf]));
    let meta = json!({
        "title": "Loss-only posterior of median survival against the expert lognormal",
        "x": "t", "y": ["posterior", "lognormal"], "bandwidth": g.bandwidth, "sampler": cfg,
    });
    Ok((vec![data], meta))
}

fn figure_six(seed: u64) -> Result<(Vec<Dataset>, Value), CliError> {
    let cfg = SamplerConfig { seed, warmup: LONG_WARMUP, samples: 10_000, ..Default::default() };
    let batch = sample_mvn(&elicited_model(), &cfg)?;
    let mut conc = Vec::new();
    let mut corr = Vec::new();
    let mut elicited = Vec::new();
    for (&(i, j), p) in pair_list(4).iter().zip(ELICITED_CONCORDANCES) {
        let tag = format!("[{},{}]", i + 1, j + 1);
        let pair = format!("{},{}", i + 1, j + 1);
        for (name, rows) in [(format!("concordance{tag}"), &mut conc), (format!("rho{tag}"), &mut corr)] {
            let g = kde_grid(&batch.column(&name).unwrap_or_default(), GRID)?;
            rows.extend(g.x.iter().zip(&g.pdf).map(|(x, d)| vec![json!(pair), num(*x), num(*d)]));
        }
        elicited.push(json!({ "pair": pair, "concordance": p }));
    }
    let meta = json!({
        "title": "Posterior concordances and correlations from the elicited marginals and concordances",
        "files": { "fig6a.csv": "concordance", "fig6b.csv": "correlation" },
        "x": "x", "y": ["density"], "series": "pair", "elicited": elicited, "sampler": cfg,
    });
    Ok((
        vec![
            table("fig6a.csv", &["pair", "x", "density"], conc),
            table("fig6b.csv", &["pair", "x", "density"], corr),
        ],
        meta,
    ))
}

fn posterior_means(batch: &SampleBatch, names: &[String]) -> Vec<f64> {
    names.iter().map(|n| mean(&batch.column(n).unwrap_or_default())).collect()
}

fn figure_seven(runs: &RegressionRuns, cfg_seed: u64) -> Result<(Vec<Dataset>, Value), CliError> {
    let names = runs.model.fixed_effect_names();
    let a = posterior_means(&runs.data_only, &names);
    let b = posterior_means(&runs.with_expert, &names);
    let dot = |w: &[f64], beta: &[f64]| w.iter().zip(beta).map(|(x, y)| x * y).sum::<f64>();
    let rows = runs
        .model
        .mean_weights()?
        .into_iter()
        .map(|(group, time, w)| vec![json!(group), num(time), num(dot(&w, &a)), num(dot(&w, &b))])
        .collect();
    let meta = json!({
        "title": "Posterior mean response by group and time on the synthetic dataset",
        "x": "time", "y": ["data_only", "with_expert"], "series": "group",
        "data": "synthetic stand-in dataset", "data_seed": SYNTHETIC_DATA_SEED, "seed": cfg_seed,
    });
    Ok((vec![table("fig7.csv", &["group", "time", "data_only", "with_expert"], rows)], meta))
}

fn figure_eight(runs: &RegressionRuns, cfg_seed: u64) -> Result<(Vec<Dataset>, Value), CliError> {
    let a = runs.data_only.column("xi").unwrap_or_default();
    let b = runs.with_expert.column("xi").unwrap_or_default();
    let lo = a.iter().chain(&b).fold(f64::INFINITY, |m, v| m.min(*v)).min(2.5 - 4.0 * 1.5);
    let hi = a.iter().chain(&b).fold(f64::NEG_INFINITY, |m, v| m.max(*v)).max(2.5 + 4.0 * 1.5);
    let x = linspace(lo, hi, GRID);
    let belief: Vec<f64> = x.iter().map(|&v| normal_ln_pdf(v, 2.5, 1.5).exp()).collect();
    let data = table(
        "fig8.csv",
        &["xi", "data_only", "with_expert", "expert"],
        numeric_rows(&[&x, &kde_at(&a, &x)?, &kde_at(&b, &x)?, &belief]),
    );
    let meta = json!({
        "title": "Change from baseline in the target arm: data only, with expert belief, and the belief",
        "x": "xi", "y": ["data_only", "with_expert", "expert"],
        "data_only_mean": mean(&a), "with_expert_mean": mean(&b),
        "data": "synthetic stand-in dataset", "data_seed": SYNTHETIC_DATA_SEED, "seed": cfg_seed,
    });
    Ok((vec![data], meta))
}

/// Writes the datasets of `figure` into `dir` and returns the written paths.
pub fn write_figure(figure: u8, seed: u64, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let (datasets, mut meta) = match figure {
        1 => figure_one()?,
        2 => figure_two()?,
        3 => figure_three()?,
        4 => figure_four(seed)?,
        5 => figure_five(seed)?,
        6 => figure_six(seed)?,
        7 => figure_seven(&regression_runs(seed)?, seed)?,
        8 => figure_eight(&regression_runs(seed)?, seed)?,
        other => return Err(CliError::input(format!("no figure {other}; choose 1 to 8"))),
    };
    let io = |p: &Path, e: std::io::Error| CliError::input(format!("{}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::new();
    for d in &datasets {
        let path = dir.join(&d.file);
        fs::write(&path, d.output.render(false)).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    meta["figure"] = json!(figure);
    meta["files"] = meta.get("files").cloned().unwrap_or_else(|| json!(datasets.iter().map(|d| &d.file).collect::<Vec<_>>()));
    let path = dir.join(format!("fig{figure}.json"));
    let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::input(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| io(&path, e))?;
    written.push(path);
    Ok(written)
}

//! The `lap` command line.

pub mod figures;
pub mod output;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use lap_core::math::corr::{concordance_to_correlation, correlation_to_concordance, pair_list};
use lap_core::math::special::{gamma_ln_pdf, gamma_p, lognormal_ln_pdf};
use lap_core::models::{dap_density_median_survival, DataSource, ModelDocument};
use lap_core::sampler::{run_chains, SampleBatch};
use lap_core::solvers::{
    coherency_intervals, dap_median_survival_quantile, dap_survival_prob, ess_to_tertiles, estimate_ess_gamma,
    fit_student_t_hyperparams, lognormal_from_ig_median_survival, regression_ess_heuristic, solve_lomax_tertiles,
    TertileAnswer,
};
use lap_core::LapError;
use serde_json::{json, Value};

use output::{num, Output};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<LapError> for CliError {
    fn from(e: LapError) -> Self {
        let code = if e.is_input_error() { EXIT_INPUT } else { EXIT_NUMERICAL };
        Self { code, message: e.to_string() }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(name = "lap", version, about = "Loss-adjusted posteriors: elicitation solvers, models and sampling")]
pub struct Cli {
    /// Print results as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lomax (alpha, beta) from elicited tertiles Q(1/3), Q(2/3).
    SolveLomax {
        #[arg(long)]
        q13: f64,
        #[arg(long)]
        q23: f64,
    },
    /// Tertiles of Lomax priors sharing a median, one row per ESS.
    LomaxTertiles {
        #[arg(long, value_delimiter = ',', required = true)]
        ess: Vec<f64>,
        #[arg(long)]
        median: f64,
    },
    /// Probability that survival at time t exceeds gamma under IG(alpha, alpha ytilde).
    DapTau {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        ytilde: f64,
        #[arg(long)]
        t: f64,
        #[arg(long, required_unless_present = "grid")]
        gamma: Option<f64>,
        /// Emit the density of survival at t and P(S > s) on a grid instead.
        #[arg(long)]
        grid: bool,
        #[arg(long, default_value_t = 199)]
        points: usize,
    },
    /// Quantile p of median survival under IG(alpha, alpha ytilde).
    DapMedian {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        ytilde: f64,
        #[arg(long, required_unless_present = "grid")]
        p: Option<f64>,
        /// Emit the median-survival density and its moment-matched lognormal on a grid.
        #[arg(long)]
        grid: bool,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Lognormal with the mean and variance of median survival under the DAP.
    MomentMatchLn {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        ytilde: f64,
    },
    /// NormalGamma hyperparameters from predictive median and upper quartile.
    FitT {
        #[arg(long)]
        q50: f64,
        #[arg(long)]
        q75: f64,
        #[arg(long)]
        ess: f64,
    },
    /// Convert between concordance probability and correlation.
    #[command(group(ArgGroup::new("input").required(true).args(["p", "r"])))]
    Concord {
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
    },
    /// Feasible interval of every correlation given the others.
    Coherency {
        /// JSON file holding a k x k correlation matrix.
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Gamma fit (shape = ESS) to `p,value` quantile pairs in a CSV file.
    FitEssGamma {
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Expert sample size matching a posterior sd from n observations.
    EssHeuristic {
        #[arg(long)]
        sd_post: f64,
        #[arg(long)]
        n: f64,
        #[arg(long)]
        sd_expert: f64,
    },
    /// Sample a model document and write draws as CSV.
    Sample(SampleArgs),
    /// Write CSV datasets and a manifest for one figure.
    PlotData {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
        figure: u8,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = figures::DEFAULT_SEED)]
        seed: u64,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV data replacing any data named in the document.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Draws CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
}

/// Loads the document and applies command-line overrides.
pub fn sample_document(args: &SampleArgs) -> Result<(ModelDocument, PathBuf), CliError> {
    let mut doc = ModelDocument::from_json(&read_file(&args.model)?)?;
    let mut base = args.model.parent().map(Path::to_path_buf).unwrap_or_default();
    if let Some(d) = &args.data {
        let abs = std::path::absolute(d).map_err(|e| CliError::input(format!("{}: {e}", d.display())))?;
        doc.data = Some(DataSource::Path(abs.to_string_lossy().into_owned()));
        base = PathBuf::new();
    }
    let mut cfg = doc.sampler.clone().unwrap_or_default();
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(c) = args.chains {
        cfg.n_chains = c;
    }
    if let Some(w) = args.warmup {
        cfg.warmup = w;
    }
    if let Some(s) = args.samples {
        cfg.samples = s;
    }
    if let Some(t) = args.thin {
        cfg.thin = t;
    }
    doc.sampler = Some(cfg);
    Ok((doc, base))
}

pub fn sample(args: &SampleArgs) -> Result<SampleBatch, CliError> {
    let (doc, base) = sample_document(args)?;
    let model = doc.resolved_model(&base).map_err(|e| match e {
        LapError::Io(io) => CliError::input(format!("data: {io}")),
        other => other.into(),
    })?;
    let target = lap_core::loss::assemble_target(model.parts()?, &doc.beliefs)?;
    Ok(run_chains(&target, doc.sampler.as_ref().expect("set above"))?)
}

pub fn survival_grid(alpha: f64, ytilde: f64, t: f64, points: usize) -> Result<Output, CliError> {
    dap_survival_prob(alpha, ytilde, t, 0.5)?;
    let rate = alpha * ytilde;
    let rows = (1..=points)
        .map(|i| {
            let s = i as f64 / (points + 1) as f64;
            // S = exp(-t lambda) with lambda ~ Gamma(alpha, rate alpha ytilde)
            let lambda = -s.ln() / t;
            let density = (gamma_ln_pdf(lambda, alpha, rate)).exp() / (t * s);
            vec![num(s), num(density), num(gamma_p(alpha, rate * lambda))]
        })
        .collect();
    Ok(Output::Table { columns: vec!["s".into(), "density".into(), "prob_exceed".into()], rows })
}

pub fn median_grid(alpha: f64, ytilde: f64, points: usize) -> Result<Output, CliError> {
    let ln = lognormal_from_ig_median_survival(alpha, ytilde)?;
    let hi = dap_median_survival_quantile(alpha, ytilde, 0.999)?;
    let rows = (1..=points)
        .map(|i| {
            let t = hi * i as f64 / points as f64;
            let d = dap_density_median_survival(alpha, alpha * ytilde, t)?;
            Ok(vec![num(t), num(d), num(lognormal_ln_pdf(t, ln.mu, ln.sigma).exp())])
        })
        .collect::<Result<Vec<_>, LapError>>()?;
    Ok(Output::Table { columns: vec!["t".into(), "density".into(), "lognormal".into()], rows })
}

fn coherency(path: &Path) -> Result<Output, CliError> {
    let v: Value = serde_json::from_str(&read_file(path)?)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let m: Vec<Vec<f64>> = serde_json::from_value(v.get("matrix").cloned().unwrap_or(v))
        .map_err(|e| CliError::input(format!("{}: expected a square matrix of numbers ({e})", path.display())))?;
    let k = m.len();
    if k < 2 || m.iter().any(|row| row.len() != k) {
        return Err(CliError::input(format!("{}: expected a square matrix with k >= 2", path.display())));
    }
    for i in 0..k {
        if m[i][i] != 1.0 {
            return Err(CliError::input(format!("diagonal entry ({0},{0}) must be 1", i + 1)));
        }
        for j in 0..i {
            if (m[i][j] - m[j][i]).abs() > 1e-12 {
                return Err(CliError::input(format!("matrix is not symmetric at ({},{})", j + 1, i + 1)));
            }
        }
    }
    let entries: Vec<f64> = pair_list(k).iter().map(|&(i, j)| m[i][j]).collect();
    let reports = coherency_intervals(k, &entries)?;
    let columns = ["i", "j", "r", "lower", "upper", "concordance", "concordance_lower", "concordance_upper", "in_interval"];
    let rows = reports
        .iter()
        .map(|r| {
            let (lo, hi) = r.interval.unwrap_or((f64::NAN, f64::NAN));
            let (clo, chi) = r.concordance_interval.unwrap_or((f64::NAN, f64::NAN));
            vec![
                json!(r.pair.0),
                json!(r.pair.1),
                num(r.r),
                num(lo),
                num(hi),
                num(r.concordance),
                num(clo),
                num(chi),
                json!(r.in_interval),
            ]
        })
        .collect();
    Ok(Output::Table { columns: columns.iter().map(|s| s.to_string()).collect(), rows })
}

/// `p,value` rows; a non-numeric first row is taken as a header.
pub fn read_pairs(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text = read_file(path)?;
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let parsed: Option<(f64, f64)> = match (rec.get(0), rec.get(1)) {
            (Some(a), Some(b)) => a.parse().ok().zip(b.parse().ok()),
            _ => None,
        };
        match parsed {
            Some(p) => out.push(p),
            None if n == 0 => {}
            None => return Err(CliError::input(format!("{}: row {} is not `p,value`", path.display(), n + 1))),
        }
    }
    Ok(out)
}

/// Runs one command, writing its result to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let result = match &cli.command {
        Command::SolveLomax { q13, q23 } => {
            let f = solve_lomax_tertiles(TertileAnswer { q13: *q13, q23: *q23 })?;
            Output::fields([("alpha", f.alpha), ("beta", f.beta)])
        }
        Command::LomaxTertiles { ess, median } => {
            let rows = ess
                .iter()
                .map(|&a| {
                    let t = ess_to_tertiles(a, *median)?;
                    Ok(vec![num(a), num(t.q13), num(t.q23), num(*median)])
                })
                .collect::<Result<Vec<_>, LapError>>()?;
            Output::Table { columns: vec!["ess".into(), "q13".into(), "q23".into(), "median".into()], rows }
        }
        Command::DapTau { alpha, ytilde, t, gamma, grid, points } => {
            if *grid {
                survival_grid(*alpha, *ytilde, *t, *points)?
            } else {
                let g = gamma.ok_or_else(|| CliError::input("--gamma is required"))?;
                Output::fields([("tau", dap_survival_prob(*alpha, *ytilde, *t, g)?)])
            }
        }
        Command::DapMedian { alpha, ytilde, p, grid, points } => {
            if *grid {
                median_grid(*alpha, *ytilde, *points)?
            } else {
                let p = p.ok_or_else(|| CliError::input("--p is required"))?;
                Output::fields([("quantile", dap_median_survival_quantile(*alpha, *ytilde, p)?)])
            }
        }
        Command::MomentMatchLn { alpha, ytilde } => {
            let ln = lognormal_from_ig_median_survival(*alpha, *ytilde)?;
            Output::fields([("mu", ln.mu), ("sigma", ln.sigma)])
        }
        Command::FitT { q50, q75, ess } => {
            let h = fit_student_t_hyperparams(*q50, *q75, *ess)?;
            let t = h.predictive()?;
            Output::fields([
                ("mu0", h.mu0),
                ("gamma", h.gamma_ng),
                ("alpha", h.alpha_ng),
                ("beta", h.beta_ng),
                ("predictive_scale", t.scale()),
                ("predictive_df", t.df),
            ])
        }
        Command::Concord { p, r } => {
            let (p, r) = match (p, r) {
                (Some(p), _) => (*p, concordance_to_correlation(*p)?),
                (None, Some(r)) => (correlation_to_concordance(*r)?, *r),
                _ => return Err(CliError::input("give --p or --r")),
            };
            Output::fields([("p", p), ("r", r)])
        }
        Command::Coherency { matrix } => coherency(matrix)?,
        Command::FitEssGamma { pairs } => {
            let f = estimate_ess_gamma(&read_pairs(pairs)?)?;
            Output::fields([("ess", f.shape), ("shape", f.shape), ("rate", f.rate), ("residual", f.residual)])
        }
        Command::EssHeuristic { sd_post, n, sd_expert } => {
            Output::fields([("n_expert", regression_ess_heuristic(*sd_post, *n, *sd_expert)?)])
        }
        Command::Sample(args) => {
            let batch = sample(args)?;
            match &args.out {
                Some(path) => {
                    let f = File::create(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
                    batch.write_csv(BufWriter::new(f))?;
                    let d = batch.diagnostics();
                    let min_ess = d.params.iter().filter_map(|p| p.ess_bulk).reduce(f64::min).unwrap_or(f64::NAN);
                    let mut fields = vec![
                        ("draws".to_string(), json!(batch.n_chains() * batch.n_samples())),
                        ("max_rhat".to_string(), num(d.max_rhat().unwrap_or(f64::NAN))),
                        ("min_ess_bulk".to_string(), num(min_ess)),
                    ];
                    for (c, a) in batch.acceptance.iter().enumerate() {
                        fields.push((format!("acceptance_chain{}", c + 1), num(*a)));
                    }
                    for w in batch.warnings.iter().chain(&d.flags) {
                        eprintln!("warning: {w}");
                    }
                    Output::Fields(fields)
                }
                None => {
                    batch.write_csv(&mut *out)?;
                    return Ok(());
                }
            }
        }
        Command::PlotData { figure, out: dir, seed } => {
            let files = figures::write_figure(*figure, *seed, dir)?;
            Output::Table {
                columns: vec!["file".into()],
                rows: files.iter().map(|f| vec![json!(f.display().to_string())]).collect(),
            }
        }
        Command::Serve { port, data_dir, workers } => {
            let mut config = lap_service::ServiceConfig::from_env().map_err(CliError::input)?;
            if let Some(p) = port {
                config.port = *p;
            }
            if let Some(d) = data_dir {
                config.data_dir = d.clone();
            }
            if let Some(w) = workers {
                config.workers = (*w).max(1);
            }
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError { code: EXIT_NUMERICAL, message: e.to_string() })?;
            rt.block_on(lap_service::serve(config))
                .map_err(|e| CliError { code: EXIT_NUMERICAL, message: format!("service stopped: {e}") })?;
            return Ok(());
        }
    };
    out.write_all(result.render(cli.json).as_bytes())
        .map_err(|e| CliError { code: EXIT_NUMERICAL, message: e.to_string() })
}

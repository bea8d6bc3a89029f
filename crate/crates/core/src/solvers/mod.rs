//! Closed-form and root-finding solvers that turn expert answers into
//! hyperparameters.

pub mod coherency;
pub mod dap;
pub mod ess;
pub mod lomax;
pub mod normal_gamma;

pub use coherency::{coherency_intervals, coherency_reports, CoherencyReport};
pub use dap::{
    dap_median_survival_quantile, dap_survival_prob, lognormal_from_ig_median_survival, solve_dap, DapFit,
    LogNormalParams, SurvivalProbAnswer,
};
pub use ess::{elicitation_count, estimate_ess_gamma, regression_ess_heuristic, GammaFit};
pub use lomax::{ess_to_tertiles, lomax_ratio_bound, solve_lomax_tertiles, tertile_ratio, LomaxFit, TertileAnswer};
pub use normal_gamma::{fit_student_t_hyperparams, NormalGammaHyper};

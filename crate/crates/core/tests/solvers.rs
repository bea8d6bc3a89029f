use lap_core::math::corr::{lkj_sample, n_pairs, pair_list, CorrelationMatrix};
use lap_core::math::special::{gamma_quantile, student_t_quantile};
use lap_core::solvers::*;
use lap_core::LapError;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lomax_cdf(x: f64, a: f64, b: f64) -> f64 {
    1.0 - (b / (x + b)).powf(a)
}

fn lomax_q(p: f64, a: f64, b: f64) -> f64 {
    b * ((1.0 - p).powf(-1.0 / a) - 1.0)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lomax_round_trip(a in 0.3f64..60.0, b in 0.05f64..50.0) {
        let ans = TertileAnswer { q13: lomax_q(1.0 / 3.0, a, b), q23: lomax_q(2.0 / 3.0, a, b) };
        let fit = solve_lomax_tertiles(ans).unwrap();
        prop_assert!((lomax_cdf(ans.q13, fit.alpha, fit.beta) - 1.0 / 3.0).abs() < 1e-9);
        prop_assert!((lomax_cdf(ans.q23, fit.alpha, fit.beta) - 2.0 / 3.0).abs() < 1e-9);
        prop_assert!(rel(fit.alpha, a) < 1e-6, "alpha {} vs {}", fit.alpha, a);
        prop_assert!(rel(fit.beta, b) < 1e-6, "beta {} vs {}", fit.beta, b);
    }

    #[test]
    fn dap_two_answer_round_trip(
        alpha in 2.0f64..80.0,
        ytilde in 0.3f64..5.0,
        tau1 in 0.05f64..0.95,
        stretch in 1.05f64..2.0,
        gamma in 0.3f64..0.7,
    ) {
        // place the first time where the survival probability is tau1
        let t1 = -alpha * ytilde * gamma.ln() / gamma_quantile(tau1, alpha);
        let t2 = t1 * stretch;
        let tau2 = dap_survival_prob(alpha, ytilde, t2, gamma).unwrap();
        prop_assume!(tau2 > 1e-3);
        let fit = solve_dap(&[
            SurvivalProbAnswer { t: t1, gamma, tau: tau1, alpha: None },
            SurvivalProbAnswer { t: t2, gamma, tau: tau2, alpha: None },
        ]).unwrap();
        prop_assert!(fit.residuals.iter().all(|r| r.abs() < 1e-6));
        prop_assert!(rel(fit.alpha, alpha) < 1e-4, "alpha {} vs {}", fit.alpha, alpha);
        prop_assert!(rel(fit.ytilde, ytilde) < 1e-4, "ytilde {} vs {}", fit.ytilde, ytilde);
    }

    #[test]
    fn dap_one_answer_round_trip(alpha in 0.5f64..100.0, ytilde in 0.1f64..10.0, t in 0.2f64..5.0, gamma in 0.1f64..0.9) {
        let tau = dap_survival_prob(alpha, ytilde, t, gamma).unwrap();
        prop_assume!(tau > 1e-6 && tau < 1.0 - 1e-6);
        let fit = solve_dap(&[SurvivalProbAnswer { t, gamma, tau, alpha: Some(alpha) }]).unwrap();
        prop_assert!(rel(fit.ytilde, ytilde) < 1e-6);
    }

    #[test]
    fn student_t_hyper_round_trip(q50 in -20.0f64..20.0, beta in 0.01f64..200.0, n_e in 4.0f64..100.0) {
        let h = NormalGammaHyper { mu0: q50, gamma_ng: n_e, alpha_ng: n_e / 2.0, beta_ng: beta };
        let scale = (beta * (n_e + 1.0) / (h.alpha_ng * n_e)).sqrt();
        let q75 = q50 + scale * student_t_quantile(0.75, n_e);
        let fit = fit_student_t_hyperparams(q50, q75, n_e).unwrap();
        prop_assert_eq!(fit.mu0, q50);
        prop_assert_eq!(fit.gamma_ng, n_e);
        prop_assert_eq!(fit.alpha_ng, n_e / 2.0);
        prop_assert!(rel(fit.beta_ng, beta) < 1e-8);
        let pred = fit.predictive().unwrap();
        prop_assert!((pred.quantile(0.75).unwrap() - q75).abs() < 1e-8 * q75.abs().max(1.0));
    }

    #[test]
    fn ess_gamma_round_trip(shape in 0.5f64..200.0, rate in 0.1f64..20.0) {
        let pairs: Vec<(f64, f64)> = [0.1, 0.25, 0.5, 0.75, 0.9]
            .iter()
            .map(|&p| (p, gamma_quantile(p, shape) / rate))
            .collect();
        let fit = estimate_ess_gamma(&pairs).unwrap();
        prop_assert!(rel(fit.shape, shape) < 0.01, "shape {} vs {}", fit.shape, shape);
        prop_assert!(rel(fit.rate, rate) < 0.01, "rate {} vs {}", fit.rate, rate);
    }
}

fn with_entry(k: usize, entries: &[f64], idx: usize, r: f64) -> DMatrix<f64> {
    let mut m = DMatrix::identity(k, k);
    for (n, &(i, j)) in pair_list(k).iter().enumerate() {
        let v = if n == idx { r } else { entries[n] };
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    m
}

fn min_eig(m: DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues().min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn coherency_interval_is_exact(seed in any::<u64>(), k in 3usize..6, eta in 0.5f64..3.0, pick in any::<prop::sample::Index>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = lkj_sample(k, eta, &mut rng).unwrap();
        let entries = m.entries();
        let reports = coherency_intervals(k, &entries).unwrap();
        prop_assert_eq!(reports.len(), n_pairs(k));
        let idx = pick.index(n_pairs(k));
        let rep = &reports[idx];
        let (lo, hi) = rep.interval.unwrap();
        prop_assert!(lo < hi);
        prop_assert!(rep.in_interval);
        for f in [1e-6, 0.1, 0.5, 0.9, 1.0 - 1e-6] {
            let r = lo + f * (hi - lo);
            prop_assert!(min_eig(with_entry(k, &entries, idx, r)) > 0.0, "r = {r} in ({lo}, {hi})");
        }
        prop_assert!(min_eig(with_entry(k, &entries, idx, lo)).abs() < 1e-6);
        prop_assert!(min_eig(with_entry(k, &entries, idx, hi)).abs() < 1e-6);
    }
}

#[test]
fn lomax_examples() {
    let fit = solve_lomax_tertiles(TertileAnswer { q13: 1.0, q23: 4.0 }).unwrap();
    assert!((fit.alpha - 1.0).abs() < 1e-9 && (fit.beta - 2.0).abs() < 1e-9);
    assert!(matches!(
        solve_lomax_tertiles(TertileAnswer { q13: 1.0, q23: 2.5 }),
        Err(LapError::Infeasible(_))
    ));
    let bound = lomax_ratio_bound();
    assert!((bound - 3f64.ln() / 1.5f64.ln()).abs() < 1e-15);
    assert!(solve_lomax_tertiles(TertileAnswer { q13: 1.0, q23: bound + 1e-3 }).unwrap().alpha > 100.0);
    assert!(solve_lomax_tertiles(TertileAnswer { q13: 1.0, q23: bound - 1e-3 }).is_err());
    let t = ess_to_tertiles(1.0, 1.0).unwrap();
    assert!((t.q13 - 0.5).abs() < 1e-12 && (t.q23 - 2.0).abs() < 1e-12);
    let t = ess_to_tertiles(10_000.0, 1.0).unwrap();
    assert!((t.q23 / t.q13 - bound).abs() < 0.01);
}

#[test]
fn coherency_closed_form() {
    let reports = coherency_intervals(3, &[0.9, 0.5, 0.9]).unwrap();
    let (lo, hi) = reports[1].interval.unwrap();
    assert!((lo - 0.62).abs() < 1e-6, "{lo}");
    assert!((hi - 1.0).abs() < 1e-6, "{hi}");
    let (lo, hi) = coherency_intervals(2, &[0.3]).unwrap()[0].interval.unwrap();
    assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
}

#[test]
fn reference_concordances_are_coherent() {
    let ps = [0.60, 0.25, 0.40, 0.50, 0.50, 0.50];
    let rs: Vec<f64> = ps.iter().map(|&p| lap_core::math::corr::concordance_to_correlation(p).unwrap()).collect();
    let a = coherency_intervals(4, &rs).unwrap();
    let b = coherency_intervals(4, &rs).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|r| r.in_interval));
    CorrelationMatrix::from_entries(4, &rs).unwrap();
}

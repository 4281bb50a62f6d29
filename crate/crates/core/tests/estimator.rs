mod common;

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wendy::estimator::{
    confidence_intervals, difference_filter, estimate_measurement_variance, fit, fit_with, irls, irls_from, ols_solve,
    parameter_covariance, CovarianceMode, EstimatorConfig, ParamLayout, ResidualCovariance, WeakProblem,
};
use wendy::models::get_benchmark;
use wendy::noise::NoiseKind;
use wendy::simulate::StateGrid;
use wendy::{FitReport, WendyError};

use common::{all_models, clean, max_rel_error, noisy, rel_diff};

#[test]
fn identity_covariance_reproduces_ols() {
    let cfg = EstimatorConfig::default();
    for model in all_models() {
        let data = noisy(&model, NoiseKind::AdditiveNormal, 0.05, model.default_points(), 1);
        let problem = WeakProblem::for_grid(&data, &cfg.basis).unwrap();
        let sys = problem.assemble(&model, &data).unwrap();
        let layout = ParamLayout::of(&model);
        let ols = layout.to_vec(&ols_solve(&sys, &layout).unwrap());
        let out = irls(&model, &data, &problem, &sys, &cfg, CovarianceMode::Identity).unwrap();
        assert!(out.converged, "{}", model.name());
        let diff = rel_diff(&out.estimates, &ols);
        assert!(diff < 1e-12, "{}: {diff:e}", model.name());
    }
}

fn scaled_pair(name: &str, test_functions: Option<usize>, factor: f64) -> (f64, f64, f64, f64) {
    let model = get_benchmark(name).unwrap();
    let data = noisy(&model, NoiseKind::AdditiveNormal, 0.05, model.default_points(), 2);
    let mut cfg = EstimatorConfig::default();
    cfg.basis.test_functions = test_functions;
    let base = WeakProblem::for_grid(&data, &cfg.basis).unwrap();
    let scaled = WeakProblem::new(base.basis.scaled(factor), base.weights.clone()).unwrap();
    let a = fit_with(&model, &data, &base, &cfg).unwrap();
    let b = fit_with(&model, &data, &scaled, &cfg).unwrap();
    let sys = base.assemble(&model, &data).unwrap();
    let layout = ParamLayout::of(&model);
    let w0 = ols_solve(&sys, &layout).unwrap();
    let c = base.residual_covariance(&model, &data, &w0, cfg.ridge).unwrap().to_dense();
    let eig = c.symmetric_eigen().eigenvalues;
    let cond = eig.max() / eig.min();
    let worst = rel_diff(&b.estimates, &a.estimates)
        .max(rel_diff(&b.ses, &a.ses))
        .max(rel_diff(b.s.as_slice(), a.s.as_slice()));
    (worst, cond, a.iterations as f64, b.iterations as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    // Half-density bases keep C well conditioned, so roundoff stays far below the tolerance.
    #[test]
    fn scaling_every_test_function_changes_nothing(log_factor in -3.0f64..3.0, pick in 0usize..5) {
        let name = ["logistic", "lv", "fhn", "hmr", "ptb"][pick];
        let (worst, cond, ia, ib) = scaled_pair(name, Some(90), 10f64.powf(log_factor));
        prop_assert!(cond < 1e8, "{name}: cond {cond:e}");
        prop_assert_eq!(ia, ib);
        prop_assert!(worst < 1e-10, "{}: {:e}", name, worst);
    }
}

#[test]
fn scaling_the_default_logistic_basis_changes_nothing() {
    let (worst, _, _, _) = scaled_pair("logistic", None, 37.5);
    assert!(worst < 1e-10, "{worst:e}");
}

// One center per interior point makes C nearly singular (cond ≈ 1e11..1e13 on
// 205-point grids), so two runs differing only in rounding can disagree at the
// cond·ε level. The algebra still cancels: the gap stays inside that bound.
#[test]
fn dense_basis_scaling_gap_is_bounded_by_conditioning() {
    for name in ["lv", "fhn", "hmr", "ptb"] {
        let (worst, cond, _, _) = scaled_pair(name, None, 37.5);
        assert!(worst <= cond * f64::EPSILON, "{name}: {worst:e} vs cond {cond:e}");
    }
}

#[test]
fn converged_fit_is_a_fixed_point() {
    let cfg = EstimatorConfig::default();
    for name in ["logistic", "lv"] {
        let model = get_benchmark(name).unwrap();
        let data = noisy(&model, NoiseKind::AdditiveNormal, 0.05, model.default_points(), 3);
        let problem = WeakProblem::for_grid(&data, &cfg.basis).unwrap();
        let first = fit_with(&model, &data, &problem, &cfg).unwrap();
        assert!(first.converged);
        let sys = problem.assemble(&model, &data).unwrap();
        let again = irls_from(&model, &data, &problem, &sys, &cfg, CovarianceMode::Linearized, &first.w_hat).unwrap();
        let step: f64 = again.estimates.iter().zip(&first.estimates).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = first.estimates.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(step < cfg.tol * norm, "{name}: moved {step:e}");
        assert_eq!(again.iterations, 1);
    }
}

#[test]
fn noise_free_data_converges_at_once() {
    let cfg = EstimatorConfig::default();
    for name in ["logistic", "lv", "fhn"] {
        let model = get_benchmark(name).unwrap();
        let data = clean(&model, model.default_points());
        let problem = WeakProblem::for_grid(&data, &cfg.basis).unwrap();
        let sys = problem.assemble(&model, &data).unwrap();
        let layout = ParamLayout::of(&model);
        let ols = layout.to_vec(&ols_solve(&sys, &layout).unwrap());
        let out = irls(&model, &data, &problem, &sys, &cfg, CovarianceMode::Linearized).unwrap();
        assert!(out.converged && out.iterations <= 2, "{name}: {} iterations", out.iterations);
        // both answers are quadrature-limited, so they agree only to discretization error
        assert!(rel_diff(&out.estimates, &ols) < 1e-4, "{name}: {:e}", rel_diff(&out.estimates, &ols));
    }
}

#[test]
fn logistic_at_quarter_noise_usually_converges() {
    let model = get_benchmark("logistic").unwrap();
    let cfg = EstimatorConfig::default();
    let converged = (0..100)
        .filter(|&seed| {
            let data = noisy(&model, NoiseKind::AdditiveNormal, 0.25, model.default_points(), seed);
            fit(&model, &data, &cfg).map(|f| f.converged).unwrap_or(false)
        })
        .count();
    assert!(converged >= 95, "{converged}/100 converged");
}

fn grid_of(columns: &[Vec<f64>]) -> StateGrid {
    let n = columns[0].len();
    StateGrid::new(0.0, 0.1, DMatrix::from_fn(n, columns.len(), |m, i| columns[i][m])).unwrap()
}

#[test]
fn variance_of_constant_data_is_zero() {
    let g = grid_of(&[vec![3.5; 40], vec![-1.0; 40]]);
    assert!(estimate_measurement_variance(&g, 14).unwrap() < 1e-24);
}

#[test]
fn variance_of_white_noise_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let normal = Normal::new(0.0, 2.0).unwrap();
    let col: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
    let v = estimate_measurement_variance(&grid_of(&[col]), 14).unwrap();
    assert_relative_eq!(v, 4.0, max_relative = 0.05);
}

#[test]
fn smooth_truth_leaks_little_and_less_when_refined() {
    let model = get_benchmark("logistic").unwrap();
    let coarse = clean(&model, 103);
    let fine = clean(&model, 205);
    let range = fine.ranges()[0];
    let vc = estimate_measurement_variance(&coarse, 14).unwrap();
    let vf = estimate_measurement_variance(&fine, 14).unwrap();
    assert!(vf <= 1e-6 * range * range, "{vf:e}");
    assert!(vf < vc, "{vf:e} vs {vc:e}");
}

#[test]
fn short_grid_is_rejected() {
    let g = grid_of(&[vec![1.0; 14]]);
    assert!(matches!(estimate_measurement_variance(&g, 14), Err(WendyError::GridTooShort { points: 14, needed: 15 })));
}

#[test]
fn filter_has_unit_norm_and_kills_polynomials() {
    let f = difference_filter(14);
    assert_eq!(f.len(), 15);
    assert_relative_eq!(f.iter().map(|v| v * v).sum::<f64>(), 1.0, epsilon = 1e-14);
    for degree in 0..14 {
        let v: f64 = f.iter().enumerate().map(|(j, c)| c * (j as f64 / 14.0).powi(degree)).sum();
        assert!(v.abs() < 1e-11, "degree {degree}: {v:e}");
    }
    let v: f64 = f.iter().enumerate().map(|(j, c)| c * (j as f64 / 14.0).powi(14)).sum();
    assert!(v.abs() > 1e-9);
}

#[test]
fn covariance_of_identity_design() {
    let design = DMatrix::identity(3, 3);
    let cov = ResidualCovariance::identity(3, 1);
    let pc = parameter_covariance(&design, &cov, 4.0).unwrap();
    assert!((pc.s - DMatrix::identity(3, 3) * 4.0).abs().max() < 1e-14);
    for se in pc.ses {
        assert_relative_eq!(se, 2.0, epsilon = 1e-14);
    }
    assert!(!pc.clamped);
}

#[test]
fn covariance_rejects_mismatched_shapes() {
    let design = DMatrix::identity(4, 2);
    let cov = ResidualCovariance::identity(3, 1);
    assert!(matches!(parameter_covariance(&design, &cov, 1.0), Err(WendyError::Dimension(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn standard_errors_scale_with_root_variance(c in 0.01f64..100.0, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let design = DMatrix::from_fn(12, 3, |_, _| normal.sample(&mut rng));
        let l = DMatrix::from_fn(12, 12, |_, _| normal.sample(&mut rng));
        let cov = ResidualCovariance::from_vec_order(12, 1, &(&l * l.transpose())).unwrap();
        let a = parameter_covariance(&design, &cov, 1.0).unwrap();
        let b = parameter_covariance(&design, &cov, c).unwrap();
        for (x, y) in a.ses.iter().zip(&b.ses) {
            prop_assert!((y - c.sqrt() * x).abs() <= 1e-10 * y.abs().max(1e-300));
        }
    }
}

/// Φ by composite Simpson on the density, inverted by bisection.
fn normal_quantile_oracle(p: f64) -> f64 {
    let cdf = |z: f64| {
        let n = 4000;
        let h = z / n as f64;
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(0.0) + pdf(z);
        for i in 1..n {
            s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        0.5 + s * h / 3.0
    };
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn interval_examples() {
    let ci = confidence_intervals(&[0.0], &[1.0], 0.95).unwrap();
    assert_relative_eq!(ci[0].0, -1.96, epsilon = 5e-4);
    assert_relative_eq!(ci[0].1, 1.96, epsilon = 5e-4);
    let ci = confidence_intervals(&[0.0], &[1.0], 0.99).unwrap();
    let z = normal_quantile_oracle(0.995);
    assert_relative_eq!(z, 2.576, epsilon = 1e-3);
    assert_relative_eq!(ci[0].1, z, epsilon = 1e-6);
    assert_relative_eq!(ci[0].0, -z, epsilon = 1e-6);
    assert_eq!(confidence_intervals(&[1.5], &[0.0], 0.95).unwrap(), vec![(1.5, 1.5)]);
    assert!(confidence_intervals(&[0.0], &[1.0], 1.0).is_err());
    assert!(confidence_intervals(&[0.0, 1.0], &[1.0], 0.9).is_err());
}

#[test]
fn noise_free_lotka_volterra_is_recovered() {
    let model = get_benchmark("lv").unwrap();
    let f = fit(&model, &clean(&model, model.default_points()), &EstimatorConfig::default()).unwrap();
    let err = max_rel_error(&f.estimates, &model.true_active());
    assert!(err <= 1e-2, "{err:e}");
}

#[test]
fn noise_free_ptb_is_recovered() {
    let model = get_benchmark("ptb").unwrap();
    let f = fit(&model, &clean(&model, model.default_points()), &EstimatorConfig::default()).unwrap();
    assert_eq!(f.estimates.len(), 11);
    let worst = f.estimates.iter().zip(model.true_active()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-2, "{worst:e}");
}

#[test]
fn low_noise_logistic_intervals_contain_truth_for_most_seeds() {
    let model = get_benchmark("logistic").unwrap();
    let cfg = EstimatorConfig::default();
    let seeds = 40;
    let hits = (0..seeds)
        .filter(|&seed| {
            let data = noisy(&model, NoiseKind::AdditiveNormal, 0.05, model.default_points(), seed);
            let f = fit(&model, &data, &cfg).unwrap();
            f.intervals().iter().zip([1.0, -1.0]).all(|((lo, hi), w)| *lo <= w && w <= *hi)
        })
        .count();
    assert!(hits * 10 >= seeds as usize * 9, "{hits}/{seeds}");
}

#[test]
fn too_few_test_functions_is_a_config_error() {
    let model = get_benchmark("lv").unwrap();
    let data = clean(&model, 205);
    let mut cfg = EstimatorConfig::default();
    cfg.basis.test_functions = Some(2);
    assert!(matches!(fit(&model, &data, &cfg), Err(WendyError::Config(_))));
}

#[test]
fn report_round_trips_through_json() {
    let model = get_benchmark("logistic").unwrap();
    let data = noisy(&model, NoiseKind::AdditiveNormal, 0.05, 205, 8);
    let f = fit(&model, &data, &EstimatorConfig::default()).unwrap();
    let report = f.report();
    assert_eq!(report.params.iter().map(|p| p.name.as_str()).collect::<Vec<_>>(), ["w1", "w2"]);
    let back: FitReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(back, report);
    for (p, (lo, hi)) in report.params.iter().zip(f.intervals()) {
        assert!(p.ci_lo == lo && p.ci_hi == hi && lo < p.estimate && p.estimate < hi);
    }
}

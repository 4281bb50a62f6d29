mod common;

use nalgebra::DMatrix;
use wendy::harness::{
    bootstrap_cloud, bootstrap_from, coverage_indicator, noise_sweep, run_experiment, run_level, sample_parameters,
    state_histograms, write_raw_csv, write_results_csv, BootstrapConfig, ExperimentConfig, StopReason, SweepMode,
    DEFAULT_HISTOGRAM_BINS,
};
use wendy::simulate::StateGrid;
use wendy::{fit, get_benchmark, EstimatorConfig, NoiseKind};

fn small(model: &str, noise: NoiseKind, gamma: f64, replicates: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig { replicates, seed, ..ExperimentConfig::single(model, noise, gamma).unwrap() }
}

#[test]
fn identical_configs_give_identical_results() {
    let cfg = small("lv", NoiseKind::AdditiveNormal, 0.05, 12, 42);
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a, b);
    let csv = |r| {
        let mut out = Vec::new();
        write_results_csv(r, &mut out).unwrap();
        write_raw_csv(r, &mut out).unwrap();
        out
    };
    assert_eq!(csv(&a), csv(&b));
}

#[test]
fn replicates_do_not_depend_on_worker_count() {
    let mut cfg = small("logistic", NoiseKind::AdditiveNormal, 0.1, 16, 7);
    cfg.threads = Some(1);
    let one = run_experiment(&cfg).unwrap();
    cfg.threads = Some(3);
    let three = run_experiment(&cfg).unwrap();
    assert_eq!(one.levels, three.levels);
}

#[test]
fn coverage_matches_a_brute_force_recount() {
    for (model, noise, gamma) in
        [("logistic", NoiseKind::AdditiveNormal, 0.25), ("lv", NoiseKind::MultiplicativeLogNormal, 0.05)]
    {
        let level = run_experiment(&small(model, noise, gamma, 30, 3)).unwrap().levels.remove(0);
        assert_eq!(level.coverage, common::brute_force_coverage(&level), "{model}");
        for (row, (est, se)) in level.covered.iter().zip(level.estimates.iter().zip(&level.ses)) {
            assert_eq!(row, &coverage_indicator(&level.true_params, est, se).unwrap());
        }
    }
}

#[test]
fn every_replicate_is_accounted_for() {
    let cfg = ExperimentConfig {
        gammas: vec![0.05, 0.3],
        mode: SweepMode::Noise,
        ..small("fhn", NoiseKind::AdditiveNormal, 0.05, 10, 5)
    };
    let result = noise_sweep(&cfg).unwrap();
    for level in &result.levels {
        assert_eq!(level.n_success + level.n_fail, 10);
        assert_eq!(level.failures.len(), level.n_fail);
        assert_eq!(level.estimates.len(), level.n_success);
        assert_eq!(level.replicate_ids.len(), level.n_success);
        assert!(level.n_unconverged <= level.n_success);
    }
}

#[test]
fn grid_shorter_than_the_filter_is_an_invalid_level() {
    let cfg = small("logistic", NoiseKind::AdditiveNormal, 0.05, 4, 1);
    let level = run_level(&cfg, 0.05, 14).unwrap();
    assert!(!level.valid);
    assert_eq!(level.n_success + level.n_fail, 4);
    assert!(level.invalid_reason.is_some());
    assert!(level.coverage.iter().all(|c| c.is_nan()));
}

#[test]
fn sweep_ending_at_the_maximum_level_reports_it() {
    let cfg = ExperimentConfig {
        gammas: vec![0.9],
        mode: SweepMode::Noise,
        ..small("logistic", NoiseKind::MultiplicativeLogNormal, 0.9, 100, 1)
    };
    let result = noise_sweep(&cfg).unwrap();
    assert_eq!(result.levels.len(), 1);
    let (_, min) = result.levels[0].min_coverage().unwrap();
    assert!(min >= 0.5, "{min}");
    assert_eq!(result.stop_reason, Some(StopReason::MaxLevel { gamma: 0.9 }));
}

#[test]
fn low_noise_replicate_is_covered_and_unbiased() {
    let level = run_experiment(&small("logistic", NoiseKind::AdditiveNormal, 1e-4, 1, 0)).unwrap().levels.remove(0);
    assert_eq!(level.n_success, 1);
    assert_eq!(level.coverage, vec![1.0, 1.0]);
    assert!(level.bias.iter().all(|b| b.abs() < 1e-2), "{:?}", level.bias);
}

#[test]
fn vanishing_noise_leaves_only_discretization_bias() {
    // intervals shrink with σ while the quadrature error stays near 1e-5
    let level = run_experiment(&small("logistic", NoiseKind::AdditiveNormal, 1e-6, 1, 0)).unwrap().levels.remove(0);
    assert_eq!(level.n_success, 1);
    assert!(level.bias.iter().all(|b| b.abs() < 1e-2), "{:?}", level.bias);
    assert!(level.mean_se.iter().all(|se| *se < 1e-5), "{:?}", level.mean_se);
}

#[test]
fn standard_errors_track_the_spread_of_estimates() {
    let level = run_experiment(&small("logistic", NoiseKind::AdditiveNormal, 0.05, 200, 8)).unwrap().levels.remove(0);
    for (se, sd) in level.mean_se.iter().zip(&level.emp_sd) {
        let ratio = se / sd;
        assert!((0.5..=2.0).contains(&ratio), "mean se {se} vs empirical sd {sd}");
    }
}

#[test]
fn zero_covariance_bootstrap_repeats_the_central_fit() {
    let m = get_benchmark("lv").unwrap();
    let w = m.true_active();
    let cloud = bootstrap_from(
        &w,
        &DMatrix::zeros(w.len(), w.len()),
        &m,
        m.u0(),
        0.0,
        5.0 / 204.0,
        205,
        &BootstrapConfig { samples: 5, ..Default::default() },
    )
    .unwrap();
    assert_eq!(cloud.diverged(), 0);
    for t in cloud.trajectories() {
        assert_eq!(t, &cloud.central);
    }
}

#[test]
fn bootstrap_cloud_has_one_trajectory_per_sample() {
    let m = get_benchmark("logistic").unwrap();
    let data = common::noisy(&m, NoiseKind::AdditiveNormal, 0.05, 103, 2);
    let f = fit(&m, &data, &EstimatorConfig::default()).unwrap();
    let cloud = bootstrap_cloud(&f, &m, m.u0(), 0.0, data.dt(), 103, &BootstrapConfig::default()).unwrap();
    assert_eq!(cloud.samples.len(), 100);
    assert!(cloud.trajectories().iter().all(|t| t.points() == 103));
}

#[test]
fn parameter_draws_centre_on_the_estimate() {
    let mean = [1.0, -2.0, 0.5];
    let s = DMatrix::from_row_slice(3, 3, &[0.04, 0.01, 0.0, 0.01, 0.09, -0.02, 0.0, -0.02, 0.01]);
    let n = 10_000;
    let draws = sample_parameters(&mean, &s, n, 17).unwrap();
    for i in 0..3 {
        let avg = draws.iter().map(|d| d[i]).sum::<f64>() / n as f64;
        assert!((avg - mean[i]).abs() <= 3.0 * (s[(i, i)] / n as f64).sqrt(), "{i}: {avg}");
    }
    // second moments too, as a check on the factorization
    let cov01 = draws.iter().map(|d| (d[0] - mean[0]) * (d[1] - mean[1])).sum::<f64>() / n as f64;
    assert!((cov01 - 0.01).abs() < 0.004, "{cov01}");
}

fn constant_grid(value: f64) -> StateGrid {
    StateGrid::new(0.0, 0.1, DMatrix::from_element(11, 1, value)).unwrap()
}

#[test]
fn identical_trajectories_fill_one_bin() {
    let grids = [constant_grid(2.0), constant_grid(2.0), constant_grid(2.0)];
    let refs: Vec<&StateGrid> = grids.iter().collect();
    let hists = state_histograms(&refs, &[3, 7], DEFAULT_HISTOGRAM_BINS).unwrap();
    assert_eq!(hists.len(), 2);
    for h in hists {
        assert_eq!(h.counts.iter().filter(|c| **c > 0).count(), 1);
        assert_eq!(h.counts.iter().sum::<usize>(), 3);
    }
}

#[test]
fn two_clusters_give_two_modes() {
    let mut grids: Vec<StateGrid> = (0..20).map(|i| constant_grid(0.0 + 0.01 * i as f64)).collect();
    grids.extend((0..20).map(|i| constant_grid(5.0 + 0.01 * i as f64)));
    let refs: Vec<&StateGrid> = grids.iter().collect();
    let h = &state_histograms(&refs, &[5], 10).unwrap()[0];
    assert_eq!(h.counts.iter().sum::<usize>(), 40);
    let peaks = (0..10)
        .filter(|&b| {
            let left = if b == 0 { 0 } else { h.counts[b - 1] };
            let right = if b == 9 { 0 } else { h.counts[b + 1] };
            h.counts[b] > left && h.counts[b] > right
        })
        .count();
    assert_eq!(peaks, 2, "{:?}", h.counts);
}

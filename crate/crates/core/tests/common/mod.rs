#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use wendy::estimator::WeakProblem;
use wendy::harness::LevelResult;
use wendy::models::{get_benchmark, Benchmark, ModelSpec};
use wendy::noise::{add_noise, MlnTarget, NoiseConfig, NoiseKind};
use wendy::simulate::{truth, StateGrid, DEFAULT_SUBSTEPS};
use wendy::weakform::BasisConfig;

/// Noise-free trajectory on the benchmark's default horizon.
pub fn clean(model: &ModelSpec, points: usize) -> StateGrid {
    truth(model, model.default_horizon(), points, DEFAULT_SUBSTEPS).unwrap()
}

pub fn noisy(model: &ModelSpec, kind: NoiseKind, gamma: f64, points: usize, seed: u64) -> StateGrid {
    let grid = clean(model, points);
    let cfg = NoiseConfig::calibrated(kind, &grid, gamma, MlnTarget::default(), seed).unwrap();
    add_noise(&grid, &cfg).unwrap()
}

pub fn all_models() -> Vec<ModelSpec> {
    Benchmark::ALL.iter().map(|b| b.spec()).collect()
}

pub fn max_rel_error(estimate: &[f64], truth: &[f64]) -> f64 {
    estimate.iter().zip(truth).map(|(e, t)| ((e - t) / t).abs()).fold(0.0, f64::max)
}

/// Largest entry-wise difference relative to the largest magnitude in `b`.
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Coverage recomputed from the stored estimates and standard errors, one interval at a time.
pub fn brute_force_coverage(level: &LevelResult) -> Vec<f64> {
    let p = level.true_params.len();
    let mut hits = vec![0usize; p];
    for (est, se) in level.estimates.iter().zip(&level.ses) {
        for i in 0..p {
            let (lo, hi) = (est[i] - 1.96 * se[i], est[i] + 1.96 * se[i]);
            if lo <= level.true_params[i] && level.true_params[i] <= hi {
                hits[i] += 1;
            }
        }
    }
    hits.iter().map(|&h| h as f64 / level.n_success as f64).collect()
}

/// Frobenius-relative gap between the Monte Carlo covariance of the weak
/// residual `GW* − B` and its linearization `σ² C`, for logistic data with
/// additive noise at `σ = 1e-3 · range`.
pub fn delta_method_gap(draws: usize, seed: u64) -> f64 {
    let model = get_benchmark("logistic").unwrap();
    let grid = truth(&model, model.default_horizon(), model.default_points(), DEFAULT_SUBSTEPS).unwrap();
    let problem = WeakProblem::for_grid(&grid, &BasisConfig::default()).unwrap();
    let w = model.true_params().clone();
    let sigma = 1e-3 * grid.ranges()[0];
    let base = problem.assemble(&model, &grid).unwrap();
    let base_r = &base.g * &w - &base.b;
    let c = problem.residual_covariance(&model, &grid, &w, 0.0).unwrap().to_vec_order() * (sigma * sigma);
    let n = base_r.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = DMatrix::zeros(n, 1);
    let mut second = DMatrix::zeros(n, n);
    for _ in 0..draws {
        let noisy =
            grid.states().map(|v| v + sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
        let sys = problem.assemble(&model, &grid.with_states(noisy).unwrap()).unwrap();
        let r = &sys.g * &w - &sys.b - &base_r;
        mean += &r;
        second += &r * r.transpose();
    }
    mean /= draws as f64;
    let emp = second / draws as f64 - &mean * mean.transpose();
    (&emp - &c).norm() / c.norm()
}

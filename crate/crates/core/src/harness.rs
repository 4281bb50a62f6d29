//! Monte Carlo coverage experiments: replicated fits at one noise level and
//! grid size, noise and resolution sweeps, and parametric bootstrap clouds.
//!
//! Every replicate draws its noise from its own generator stream, so results
//! do not depend on how replicates are scheduled across threads. Aggregation
//! always runs in replicate order.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WendyError};
use crate::estimator::{fit_with, EstimatorConfig, WeakProblem, WendyFit};
use crate::models::{get_benchmark, Benchmark, ModelSpec};
use crate::noise::{
    add_noise_with, calibrate_sigma_with, empirical_noise_ratio, stream_rng, MlnTarget, NoiseConfig, NoiseKind,
};
use crate::simulate::{integrate, truth, StateGrid, DEFAULT_SUBSTEPS};

/// Interval half-width multiplier used by the coverage indicator.
pub const COVERAGE_Z: f64 = 1.96;
pub const DEFAULT_REPLICATES: usize = 200;
pub const FULL_REPLICATES: usize = 1000;
/// Noise sweeps never go past this level.
pub const MAX_NOISE_LEVEL: f64 = 0.9;
/// A sweep stops once some parameter's coverage falls below this.
pub const COVERAGE_FLOOR: f64 = 0.5;
pub const DEFAULT_HISTOGRAM_BINS: usize = 30;
pub const DEFAULT_HISTOGRAM_TIMES: usize = 8;
pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 100;

/// `C_i = 1` iff `w_i − 1.96·se_i ≤ w*_i ≤ w_i + 1.96·se_i`.
pub fn coverage_indicator(w_star: &[f64], w: &[f64], ses: &[f64]) -> Result<Vec<u8>> {
    if w_star.len() != w.len() || w.len() != ses.len() {
        return Err(WendyError::Dimension(format!(
            "coverage needs equal lengths, got {}, {}, {}",
            w_star.len(),
            w.len(),
            ses.len()
        )));
    }
    Ok(w_star
        .iter()
        .zip(w)
        .zip(ses)
        .map(|((&t, &e), &s)| u8::from(e - COVERAGE_Z * s <= t && t <= e + COVERAGE_Z * s))
        .collect())
}

/// `bias_i = w*_i − mean_r(estimates[r][i])` and `bias_i / w*_i`, the latter
/// `None` where `w*_i = 0`.
pub fn bias_stats(w_star: &[f64], estimates: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
    if estimates.is_empty() {
        return Err(WendyError::Config("bias needs at least one replicate".into()));
    }
    if let Some(row) = estimates.iter().find(|r| r.len() != w_star.len()) {
        return Err(WendyError::Dimension(format!(
            "estimate row has {} entries, expected {}",
            row.len(),
            w_star.len()
        )));
    }
    let n = estimates.len() as f64;
    let bias: Vec<f64> =
        (0..w_star.len()).map(|i| w_star[i] - estimates.iter().map(|r| r[i]).sum::<f64>() / n).collect();
    let rel = bias.iter().zip(w_star).map(|(&b, &t)| if t == 0.0 { None } else { Some(b / t) }).collect();
    Ok((bias, rel))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Single,
    Noise,
    Resolution,
}

impl SweepMode {
    pub fn level_kind(self) -> &'static str {
        match self {
            SweepMode::Single => "single",
            SweepMode::Noise => "noise",
            SweepMode::Resolution => "resolution",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: String,
    pub noise: NoiseKind,
    /// Noise levels; a single-level or resolution run uses the first entry.
    pub gammas: Vec<f64>,
    /// Grid sizes; a single-level or noise run uses the first entry.
    pub points: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub mode: SweepMode,
    pub estimator: EstimatorConfig,
    /// Defaults to the model's horizon.
    pub horizon: Option<f64>,
    pub substeps: usize,
    pub mln_target: MlnTarget,
    /// Worker cap; `None` uses rayon's default pool.
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    /// One level at the model's default grid.
    pub fn single(model: &str, noise: NoiseKind, gamma: f64) -> Result<Self> {
        let spec = get_benchmark(model)?;
        Ok(ExperimentConfig {
            model: spec.name().to_string(),
            noise,
            gammas: vec![gamma],
            points: vec![spec.default_points()],
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            mode: SweepMode::Single,
            estimator: EstimatorConfig::default(),
            horizon: None,
            substeps: DEFAULT_SUBSTEPS,
            mln_target: MlnTarget::default(),
            threads: None,
        })
    }

    /// A noise sweep over the default schedule for this model and noise kind.
    pub fn noise_sweep(model: &str, noise: NoiseKind) -> Result<Self> {
        let bench: Benchmark = model.parse()?;
        let gammas = default_noise_schedule(bench, noise).ok_or_else(|| {
            WendyError::Config(format!("no default {noise} schedule for {}; supply levels explicitly", bench.name()))
        })?;
        Ok(ExperimentConfig { gammas, mode: SweepMode::Noise, ..ExperimentConfig::single(model, noise, 0.1)? })
    }

    /// A resolution sweep over the default grid sizes for this model.
    pub fn resolution_sweep(model: &str, noise: NoiseKind) -> Result<Self> {
        let bench: Benchmark = model.parse()?;
        Ok(ExperimentConfig {
            gammas: vec![default_resolution_gamma(bench, noise)],
            points: default_resolution_schedule(bench),
            mode: SweepMode::Resolution,
            ..ExperimentConfig::single(model, noise, 0.1)?
        })
    }

    pub fn validate(&self) -> Result<()> {
        get_benchmark(&self.model)?;
        self.estimator.validate()?;
        if self.replicates == 0 {
            return Err(WendyError::Config("replicates must be at least 1".into()));
        }
        if self.gammas.is_empty() || self.points.is_empty() {
            return Err(WendyError::Config("need at least one noise level and one grid size".into()));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
            return Err(WendyError::Config(format!("noise level {g} outside (0, 1]")));
        }
        if self.mode == SweepMode::Noise && self.gammas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(WendyError::Config("noise levels must be strictly increasing".into()));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(WendyError::Config(format!("horizon must be positive, got {h}")));
            }
        }
        if self.substeps == 0 {
            return Err(WendyError::Config("substeps must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(WendyError::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// `(gamma, points)` for every level in run order.
    pub fn levels(&self) -> Vec<(f64, usize)> {
        match self.mode {
            SweepMode::Single => vec![(self.gammas[0], self.points[0])],
            SweepMode::Noise => self.gammas.iter().map(|&g| (g, self.points[0])).collect(),
            SweepMode::Resolution => self.points.iter().map(|&p| (self.gammas[0], p)).collect(),
        }
    }
}

/// Noise levels shown for each model and noise kind. `None` where the
/// combination is not meaningful (truncated or censored noise on states that
/// may be negative).
pub fn default_noise_schedule(model: Benchmark, kind: NoiseKind) -> Option<Vec<f64>> {
    use Benchmark::*;
    use NoiseKind::*;
    let levels: &[f64] = match (model, kind) {
        (Logistic, AdditiveNormal) => &[0.05, 0.25, 0.5, 0.7],
        (Logistic, CensoredNormal) => &[0.1, 0.3, 0.5, 0.6],
        (Logistic, MultiplicativeLogNormal) => &[0.05, 0.25, 0.5, 0.9],
        (Logistic, TruncatedNormal) => &[0.1, 0.3, 0.7, 0.9],
        (LotkaVolterra, AdditiveNormal) => &[0.1, 0.3, 0.5, 0.6],
        (LotkaVolterra, CensoredNormal) => &[0.3, 0.5, 0.7, 0.8],
        (LotkaVolterra, MultiplicativeLogNormal) => &[0.05, 0.2, 0.4, 0.9],
        (LotkaVolterra, TruncatedNormal) => &[0.025, 0.05, 0.075, 0.1],
        (FitzHughNagumo, AdditiveNormal) => &[0.02, 0.03, 0.05, 0.07],
        (FitzHughNagumo, MultiplicativeLogNormal) => &[0.002, 0.004, 0.006, 0.008],
        (HindmarshRose, AdditiveNormal) => &[0.01, 0.02, 0.03, 0.04],
        (HindmarshRose, MultiplicativeLogNormal) => &[0.0005, 0.001, 0.002, 0.0025],
        (Ptb, AdditiveNormal | CensoredNormal | MultiplicativeLogNormal) => &[0.3, 0.5, 0.7, 0.9],
        (Ptb, TruncatedNormal) => &[0.15, 0.3, 0.45, 0.6],
        _ => return None,
    };
    Some(levels.to_vec())
}

pub fn default_resolution_schedule(model: Benchmark) -> Vec<usize> {
    match model {
        Benchmark::Logistic | Benchmark::LotkaVolterra => vec![20, 120, 220, 320],
        Benchmark::FitzHughNagumo => vec![20, 150, 275, 400],
        Benchmark::HindmarshRose => vec![50, 150, 250, 350],
        Benchmark::Ptb => vec![30, 130, 230, 330],
    }
}

pub fn default_resolution_gamma(model: Benchmark, kind: NoiseKind) -> f64 {
    match (model, kind) {
        (Benchmark::Logistic, NoiseKind::AdditiveNormal) => 0.05,
        (Benchmark::Logistic, _) => 0.1,
        (Benchmark::LotkaVolterra, _) => 0.3,
        (Benchmark::FitzHughNagumo, NoiseKind::MultiplicativeLogNormal) => 0.002,
        (Benchmark::FitzHughNagumo, _) => 0.02,
        (Benchmark::HindmarshRose, _) => 0.0005,
        (Benchmark::Ptb, _) => 0.1,
    }
}

/// Why a replicate produced no estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub replicate: usize,
    pub kind: String,
    pub message: String,
}

/// Aggregates for one `(gamma, points)` level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level_kind: String,
    pub gamma: f64,
    pub points: usize,
    pub param_names: Vec<String>,
    pub true_params: Vec<f64>,
    /// NaN when no replicate succeeded.
    pub coverage: Vec<f64>,
    pub bias: Vec<f64>,
    /// `None` where the true value is zero.
    pub rel_bias: Vec<Option<f64>>,
    pub mean_se: Vec<f64>,
    pub emp_sd: Vec<f64>,
    pub n_success: usize,
    pub n_fail: usize,
    pub n_unconverged: usize,
    pub failures: Vec<FailureRecord>,
    /// Mean empirical noise-to-signal RMS ratio across replicates.
    pub noise_ratio: f64,
    /// Replicate index of each row of `estimates`, `ses` and `covered`.
    pub replicate_ids: Vec<usize>,
    pub estimates: Vec<Vec<f64>>,
    pub ses: Vec<Vec<f64>>,
    pub covered: Vec<Vec<u8>>,
    pub valid: bool,
    pub invalid_reason: Option<String>,
}

impl LevelResult {
    /// The level value reported in tables: γ for noise and single runs, M+1 for resolution runs.
    pub fn level_value(&self) -> f64 {
        if self.level_kind == SweepMode::Resolution.level_kind() {
            self.points as f64
        } else {
            self.gamma
        }
    }

    pub fn failure_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for f in &self.failures {
            *counts.entry(f.kind.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Smallest coverage over parameters together with its index.
    pub fn min_coverage(&self) -> Option<(usize, f64)> {
        self.coverage.iter().copied().enumerate().filter(|(_, c)| !c.is_nan()).min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    /// Some parameter's coverage fell below the floor at this level.
    CoverageBelowFloor { gamma: f64, param: String, coverage: f64 },
    /// The maximum noise level was reached.
    MaxLevel { gamma: f64 },
    /// Every scheduled level ran without triggering a stop.
    ScheduleExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub levels: Vec<LevelResult>,
    pub stop_reason: Option<StopReason>,
}

/// One replicate's outcome.
enum Replicate {
    Fit { estimates: Vec<f64>, ses: Vec<f64>, converged: bool, noise_ratio: f64 },
    Failed { error: WendyError, noise_ratio: Option<f64> },
}

fn run_replicate(
    model: &ModelSpec,
    truth: &StateGrid,
    problem: &WeakProblem,
    noise: &NoiseConfig,
    cfg: &EstimatorConfig,
    base_seed: u64,
    replicate: usize,
) -> Replicate {
    let mut rng = stream_rng(base_seed, replicate as u64);
    let noisy = match add_noise_with(truth, noise, &mut rng) {
        Ok(n) => n,
        Err(error) => return Replicate::Failed { error, noise_ratio: None },
    };
    let noise_ratio = empirical_noise_ratio(truth, &noisy).ok();
    match fit_with(model, &noisy, problem, cfg) {
        Ok(f) if f.estimates.iter().chain(&f.ses).all(|v| v.is_finite()) => Replicate::Fit {
            estimates: f.estimates,
            ses: f.ses,
            converged: f.converged,
            noise_ratio: noise_ratio.unwrap_or(f64::NAN),
        },
        Ok(_) => Replicate::Failed { error: WendyError::Divergence { time: f64::NAN }, noise_ratio },
        Err(error) => Replicate::Failed { error, noise_ratio },
    }
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| WendyError::Config(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs every replicate at one `(gamma, points)` level and aggregates.
pub fn run_level(cfg: &ExperimentConfig, gamma: f64, points: usize) -> Result<LevelResult> {
    cfg.validate()?;
    let model = get_benchmark(&cfg.model)?;
    let horizon = cfg.horizon.unwrap_or(model.default_horizon());
    let true_params = model.true_active();
    let p = true_params.len();
    let level_kind = cfg.mode.level_kind().to_string();

    let invalid = |reason: WendyError| LevelResult {
        level_kind: level_kind.clone(),
        gamma,
        points,
        param_names: model.param_names(),
        true_params: true_params.clone(),
        coverage: vec![f64::NAN; p],
        bias: vec![f64::NAN; p],
        rel_bias: vec![None; p],
        mean_se: vec![f64::NAN; p],
        emp_sd: vec![f64::NAN; p],
        n_success: 0,
        n_fail: cfg.replicates,
        n_unconverged: 0,
        failures: (0..cfg.replicates)
            .map(|r| FailureRecord { replicate: r, kind: reason.kind().to_string(), message: reason.to_string() })
            .collect(),
        noise_ratio: f64::NAN,
        replicate_ids: Vec::new(),
        estimates: Vec::new(),
        ses: Vec::new(),
        covered: Vec::new(),
        valid: false,
        invalid_reason: Some(reason.to_string()),
    };

    // Grid-level preconditions: a level that cannot be fit at all is invalid as a whole.
    let truth = match truth(&model, horizon, points, cfg.substeps) {
        Ok(t) => t,
        Err(e) => return Ok(invalid(e)),
    };
    let needed = cfg.estimator.filter_order + 1;
    if points < needed {
        return Ok(invalid(WendyError::GridTooShort { points, needed }));
    }
    let problem = match WeakProblem::for_grid(&truth, &cfg.estimator.basis) {
        Ok(p) => p,
        Err(e) => return Ok(invalid(e)),
    };
    let sigmas = calibrate_sigma_with(cfg.noise, &truth, gamma, cfg.mln_target)?;
    let noise = NoiseConfig { kind: cfg.noise, gamma, sigmas, seed: cfg.seed };

    let outcomes: Vec<Replicate> = with_pool(cfg.threads, || {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|r| run_replicate(&model, &truth, &problem, &noise, &cfg.estimator, cfg.seed, r))
            .collect()
    })?;

    let mut replicate_ids = Vec::new();
    let mut estimates = Vec::new();
    let mut ses = Vec::new();
    let mut covered = Vec::new();
    let mut failures = Vec::new();
    let mut n_unconverged = 0;
    let mut ratio_sum = 0.0;
    let mut ratio_count = 0usize;
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Replicate::Fit { estimates: e, ses: s, converged, noise_ratio } => {
                if noise_ratio.is_finite() {
                    ratio_sum += noise_ratio;
                    ratio_count += 1;
                }
                n_unconverged += usize::from(!converged);
                covered.push(coverage_indicator(&true_params, &e, &s)?);
                replicate_ids.push(r);
                estimates.push(e);
                ses.push(s);
            }
            Replicate::Failed { error, noise_ratio } => {
                if let Some(nr) = noise_ratio.filter(|v| v.is_finite()) {
                    ratio_sum += nr;
                    ratio_count += 1;
                }
                failures.push(FailureRecord {
                    replicate: r,
                    kind: error.kind().to_string(),
                    message: error.to_string(),
                });
            }
        }
    }

    let n_success = estimates.len();
    let n_fail = failures.len();
    let n = n_success as f64;
    let column_mean = |rows: &[Vec<f64>], i: usize| rows.iter().map(|r| r[i]).sum::<f64>() / n;
    let (coverage, bias, rel_bias, mean_se, emp_sd) = if n_success == 0 {
        (vec![f64::NAN; p], vec![f64::NAN; p], vec![None; p], vec![f64::NAN; p], vec![f64::NAN; p])
    } else {
        let coverage = (0..p).map(|i| covered.iter().map(|c| f64::from(c[i])).sum::<f64>() / n).collect();
        let (bias, rel_bias) = bias_stats(&true_params, &estimates)?;
        let mean_se = (0..p).map(|i| column_mean(&ses, i)).collect();
        let emp_sd = (0..p)
            .map(|i| {
                // sample standard deviation needs two estimates
                if n_success < 2 {
                    return f64::NAN;
                }
                let m = column_mean(&estimates, i);
                (estimates.iter().map(|r| (r[i] - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            })
            .collect();
        (coverage, bias, rel_bias, mean_se, emp_sd)
    };
    let valid = 2 * n_fail <= cfg.replicates;
    let invalid_reason = (!valid).then(|| {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for f in &failures {
            *counts.entry(f.kind.as_str()).or_insert(0) += 1;
        }
        let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k}: {v}")).collect();
        format!("{n_fail} of {} fits failed ({})", cfg.replicates, summary.join(", "))
    });

    Ok(LevelResult {
        level_kind,
        gamma,
        points,
        param_names: model.param_names(),
        true_params,
        coverage,
        bias,
        rel_bias,
        mean_se,
        emp_sd,
        n_success,
        n_fail,
        n_unconverged,
        failures,
        noise_ratio: if ratio_count == 0 { f64::NAN } else { ratio_sum / ratio_count as f64 },
        replicate_ids,
        estimates,
        ses,
        covered,
        valid,
        invalid_reason,
    })
}

/// Runs levels in increasing γ and stops after the first level where some
/// coverage drops below one half, or once γ reaches the maximum level.
pub fn noise_sweep(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    cfg.mode = SweepMode::Noise;
    cfg.validate()?;
    let mut levels = Vec::new();
    let mut stop_reason = StopReason::ScheduleExhausted;
    for (gamma, points) in cfg.levels() {
        if gamma > MAX_NOISE_LEVEL + 1e-12 {
            stop_reason = StopReason::MaxLevel { gamma: MAX_NOISE_LEVEL };
            break;
        }
        let level = run_level(&cfg, gamma, points)?;
        let low = level.valid.then(|| level.min_coverage()).flatten().filter(|&(_, c)| c < COVERAGE_FLOOR);
        let low = low.map(|(i, c)| (level.param_names[i].clone(), c));
        levels.push(level);
        if let Some((param, coverage)) = low {
            stop_reason = StopReason::CoverageBelowFloor { gamma, param, coverage };
            break;
        }
        if gamma >= MAX_NOISE_LEVEL - 1e-12 {
            stop_reason = StopReason::MaxLevel { gamma };
            break;
        }
    }
    Ok(ExperimentResult { config: cfg, levels, stop_reason: Some(stop_reason) })
}

/// Fixed γ, one level per grid size.
pub fn resolution_sweep(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut cfg = cfg.clone();
    cfg.mode = SweepMode::Resolution;
    cfg.validate()?;
    let levels = cfg.levels().into_iter().map(|(g, p)| run_level(&cfg, g, p)).collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult { config: cfg, levels, stop_reason: None })
}

/// Dispatches on `cfg.mode`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    match cfg.mode {
        SweepMode::Single => {
            cfg.validate()?;
            let (g, p) = cfg.levels()[0];
            Ok(ExperimentResult { config: cfg.clone(), levels: vec![run_level(cfg, g, p)?], stop_reason: None })
        }
        SweepMode::Noise => noise_sweep(cfg),
        SweepMode::Resolution => resolution_sweep(cfg),
    }
}

pub const RESULTS_HEADER: [&str; 10] =
    ["level_kind", "level_value", "param", "coverage", "bias", "rel_bias", "mean_se", "emp_sd", "n_success", "n_fail"];

pub const RAW_HEADER: [&str; 8] =
    ["level_kind", "level_value", "replicate", "param", "estimate", "se", "covered", "true_value"];

/// Marker written where a relative bias is undefined.
pub const UNDEFINED: &str = "NA";

fn num(v: f64) -> String {
    if v.is_nan() {
        UNDEFINED.to_string()
    } else {
        format!("{v:.12e}")
    }
}

/// One row per (level, parameter).
pub fn write_results_csv<W: Write>(result: &ExperimentResult, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(RESULTS_HEADER)?;
    for level in &result.levels {
        for (i, name) in level.param_names.iter().enumerate() {
            out.write_record([
                level.level_kind.clone(),
                num(level.level_value()),
                name.clone(),
                num(level.coverage[i]),
                num(level.bias[i]),
                level.rel_bias[i].map_or_else(|| UNDEFINED.to_string(), num),
                num(level.mean_se[i]),
                num(level.emp_sd[i]),
                level.n_success.to_string(),
                level.n_fail.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per (level, successful replicate, parameter).
pub fn write_raw_csv<W: Write>(result: &ExperimentResult, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(RAW_HEADER)?;
    for level in &result.levels {
        for (row, &r) in level.replicate_ids.iter().enumerate() {
            for (i, name) in level.param_names.iter().enumerate() {
                out.write_record([
                    level.level_kind.clone(),
                    num(level.level_value()),
                    r.to_string(),
                    name.clone(),
                    num(level.estimates[row][i]),
                    num(level.ses[row][i]),
                    level.covered[row][i].to_string(),
                    num(level.true_params[i]),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Parameter vectors drawn from `N(mean, s)` through a symmetric
/// eigendecomposition, so rank-deficient `s` is allowed.
pub fn sample_parameters(mean: &[f64], s: &DMatrix<f64>, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let p = mean.len();
    if s.shape() != (p, p) {
        return Err(WendyError::Dimension(format!("covariance is {:?}, mean has {p} entries", s.shape())));
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let smallest = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if smallest < -1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(WendyError::CovarianceFactorization { smallest_eigenvalue: smallest });
    }
    let roots = DVector::from_iterator(p, eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()));
    let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre = DVector::from_column_slice(mean);
    Ok((0..n)
        .map(|_| {
            let z = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
            (&centre + &factor * z).iter().copied().collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub samples: usize,
    pub seed: u64,
    pub substeps: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { samples: DEFAULT_BOOTSTRAP_SAMPLES, seed: 0, substeps: DEFAULT_SUBSTEPS }
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapSample {
    pub params: Vec<f64>,
    /// `None` when the forward solve diverged.
    pub trajectory: Option<StateGrid>,
}

#[derive(Debug, Clone)]
pub struct BootstrapCloud {
    /// Solution at the fitted parameters.
    pub central: StateGrid,
    pub samples: Vec<BootstrapSample>,
}

impl BootstrapCloud {
    pub fn diverged(&self) -> usize {
        self.samples.iter().filter(|s| s.trajectory.is_none()).count()
    }

    pub fn trajectories(&self) -> Vec<&StateGrid> {
        self.samples.iter().filter_map(|s| s.trajectory.as_ref()).collect()
    }
}

/// Parametric bootstrap: draws from `N(ŵ, S)` and forward-solves each draw on
/// the grid `t0 + m·dt`, `m = 0..points`.
pub fn bootstrap_cloud(
    fit: &WendyFit,
    model: &ModelSpec,
    u0: &[f64],
    t0: f64,
    dt: f64,
    points: usize,
    cfg: &BootstrapConfig,
) -> Result<BootstrapCloud> {
    bootstrap_from(&fit.estimates, &fit.s, model, u0, t0, dt, points, cfg)
}

/// [`bootstrap_cloud`] from an explicit mean and covariance.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_from(
    estimates: &[f64],
    s: &DMatrix<f64>,
    model: &ModelSpec,
    u0: &[f64],
    t0: f64,
    dt: f64,
    points: usize,
    cfg: &BootstrapConfig,
) -> Result<BootstrapCloud> {
    if cfg.samples == 0 {
        return Err(WendyError::Config("bootstrap needs at least one sample".into()));
    }
    if points < 3 || !(dt > 0.0) {
        return Err(WendyError::Config(format!("bootstrap grid needs ≥ 3 points and dt > 0, got {points}, {dt}")));
    }
    let horizon = t0 + (points - 1) as f64 * dt;
    let solve = |w: &[f64]| -> Result<StateGrid> {
        let wm = model.matrix_from_active(w)?;
        integrate(model, &wm, u0, t0, horizon, points - 1, cfg.substeps)
    };
    let central = solve(estimates)?;
    let draws = sample_parameters(estimates, s, cfg.samples, cfg.seed)?;
    let samples = draws
        .into_iter()
        .map(|params| {
            let trajectory = solve(&params).ok();
            BootstrapSample { params, trajectory }
        })
        .collect();
    Ok(BootstrapCloud { central, samples })
}

/// `count` evenly spaced interior indices of a grid with `points` samples.
pub fn default_time_indices(points: usize, count: usize) -> Vec<usize> {
    let m = points.saturating_sub(1);
    let mut idx: Vec<usize> = (1..=count)
        .map(|j| ((j * m) as f64 / (count + 1) as f64).round() as usize)
        .filter(|&i| i > 0 && i < m)
        .collect();
    idx.dedup();
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeHistogram {
    pub index: usize,
    pub time: f64,
    pub state: usize,
    /// Left edge of the first bin.
    pub lo: f64,
    /// Right edge of the last bin.
    pub hi: f64,
    pub counts: Vec<usize>,
}

/// Fixed-width histograms of each state across trajectories at the given time
/// indices. Bins span the observed range; a zero range puts everything in the
/// first bin.
pub fn state_histograms(
    trajectories: &[&StateGrid],
    time_indices: &[usize],
    bins: usize,
) -> Result<Vec<TimeHistogram>> {
    if bins == 0 {
        return Err(WendyError::Config("histograms need at least one bin".into()));
    }
    let Some(first) = trajectories.first() else {
        return Ok(Vec::new());
    };
    let (points, d) = (first.points(), first.state_dim());
    if trajectories.iter().any(|t| t.points() != points || t.state_dim() != d) {
        return Err(WendyError::Dimension("trajectories have different shapes".into()));
    }
    if let Some(&bad) = time_indices.iter().find(|&&i| i >= points) {
        return Err(WendyError::Dimension(format!("time index {bad} outside a {points}-point grid")));
    }
    let mut out = Vec::with_capacity(time_indices.len() * d);
    for &index in time_indices {
        for state in 0..d {
            let values: Vec<f64> = trajectories.iter().map(|t| t.states()[(index, state)]).collect();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let width = (hi - lo) / bins as f64;
            let mut counts = vec![0; bins];
            for v in values {
                let b = if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
                counts[b] += 1;
            }
            out.push(TimeHistogram { index, time: first.time(index), state, lo, hi, counts });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coverage_boundaries() {
        assert_eq!(coverage_indicator(&[1.19], &[1.0], &[0.1]).unwrap(), vec![1]);
        assert_eq!(coverage_indicator(&[1.20], &[1.0], &[0.1]).unwrap(), vec![0]);
        assert_eq!(coverage_indicator(&[2.0], &[2.0], &[0.0]).unwrap(), vec![1]);
        assert!(coverage_indicator(&[1.0], &[1.0, 2.0], &[0.1]).is_err());
    }

    #[test]
    fn bias_sign_convention() {
        let (b, r) = bias_stats(&[1.0], &[vec![0.9], vec![1.1]]).unwrap();
        assert!(b[0].abs() < 1e-15 && r[0].unwrap().abs() < 1e-15);
        let (b, r) = bias_stats(&[1.0, -1.0], &vec![vec![1.0, -1.0]; 3]).unwrap();
        assert_eq!((b, r), (vec![0.0, 0.0], vec![Some(0.0), Some(0.0)]));
        let (b, r) = bias_stats(&[1.0], &[vec![2.0]]).unwrap();
        assert_eq!((b[0], r[0]), (-1.0, Some(-1.0)));
        let (_, r) = bias_stats(&[0.0], &[vec![0.5]]).unwrap();
        assert_eq!(r[0], None);
        assert!(bias_stats(&[1.0], &[]).is_err());
    }

    #[test]
    fn default_schedules_are_increasing() {
        for b in Benchmark::ALL {
            for k in NoiseKind::ALL {
                if let Some(s) = default_noise_schedule(b, k) {
                    assert!(s.windows(2).all(|w| w[0] < w[1]));
                    assert!(s.iter().all(|&g| g > 0.0 && g <= MAX_NOISE_LEVEL));
                }
            }
            assert!(default_resolution_schedule(b).windows(2).all(|w| w[0] < w[1]));
        }
        assert!(default_noise_schedule(Benchmark::FitzHughNagumo, NoiseKind::TruncatedNormal).is_none());
    }

    #[test]
    fn time_indices_are_interior_and_even() {
        let idx = default_time_indices(103, 8);
        assert_eq!(idx.len(), 8);
        assert!(idx.iter().all(|&i| i > 0 && i < 102));
        assert!(idx.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(default_time_indices(3, 8), vec![1]);
    }
}

//! Measurement-noise generation: additive normal, additive censored normal
//! (ACN), additive truncated normal (ATN) and multiplicative log-normal (MLN),
//! with per-state σ calibrated from a noise level γ.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, WendyError};
use crate::simulate::StateGrid;

/// Noise distribution. The numeric codes follow the data-generation branch order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    AdditiveNormal = 0,
    CensoredNormal = 1,
    TruncatedNormal = 2,
    MultiplicativeLogNormal = 3,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::AdditiveNormal,
        NoiseKind::CensoredNormal,
        NoiseKind::TruncatedNormal,
        NoiseKind::MultiplicativeLogNormal,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        NoiseKind::ALL.get(code as usize).copied()
    }

    /// CLI spelling.
    pub fn cli_name(self) -> &'static str {
        match self {
            NoiseKind::AdditiveNormal => "normal",
            NoiseKind::CensoredNormal => "acn",
            NoiseKind::TruncatedNormal => "atn",
            NoiseKind::MultiplicativeLogNormal => "mln",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for NoiseKind {
    type Err = WendyError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" | "0" => Ok(NoiseKind::AdditiveNormal),
            "acn" | "1" => Ok(NoiseKind::CensoredNormal),
            "atn" | "2" => Ok(NoiseKind::TruncatedNormal),
            "mln" | "3" => Ok(NoiseKind::MultiplicativeLogNormal),
            other => {
                Err(WendyError::Config(format!("unknown noise kind `{other}`; valid kinds: normal, acn, atn, mln")))
            }
        }
    }
}

/// What the log-normal variance is equated to during calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlnTarget {
    /// Variance of the multiplicative factor equals `range · γ`.
    #[default]
    RangeTimesGamma,
    /// Variance of the multiplicative factor equals `(range · γ)²`.
    RangeTimesGammaSquared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub gamma: f64,
    pub sigmas: Vec<f64>,
    pub seed: u64,
}

impl NoiseConfig {
    /// Calibrates σ from `truth` and bundles everything needed by [`add_noise`].
    pub fn calibrated(kind: NoiseKind, truth: &StateGrid, gamma: f64, target: MlnTarget, seed: u64) -> Result<Self> {
        let sigmas = calibrate_sigma_with(kind, truth, gamma, target)?;
        Ok(NoiseConfig { kind, gamma, sigmas, seed })
    }
}

/// σ_i from the state range r_i: `r_i γ` for the additive kinds; for MLN the
/// σ solving `(e^{σ²} − 1) e^{σ²} = r_i γ`.
pub fn calibrate_sigma(kind: NoiseKind, truth: &StateGrid, gamma: f64) -> Result<Vec<f64>> {
    calibrate_sigma_with(kind, truth, gamma, MlnTarget::default())
}

pub fn calibrate_sigma_with(kind: NoiseKind, truth: &StateGrid, gamma: f64, target: MlnTarget) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(WendyError::Config(format!("noise level must lie in (0, 1], got {gamma}")));
    }
    Ok(truth
        .ranges()
        .into_iter()
        .map(|r| match kind {
            NoiseKind::MultiplicativeLogNormal => {
                let t = match target {
                    MlnTarget::RangeTimesGamma => r * gamma,
                    MlnTarget::RangeTimesGammaSquared => (r * gamma).powi(2),
                };
                lognormal_sigma_for_variance(t)
            }
            _ => r * gamma,
        })
        .collect())
}

/// Solves `(e^{σ²} − 1) e^{σ²} = v` for σ ≥ 0 via the quadratic in `x = e^{σ²}`.
pub fn lognormal_sigma_for_variance(v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let x = 0.5 * (1.0 + (1.0 + 4.0 * v).sqrt());
    x.ln().max(0.0).sqrt()
}

/// Deterministic per-replicate generator: seeded from `base_seed ⊕ mix(stream)`.
pub fn stream_rng(base_seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed ^ splitmix64(stream))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Returns a noisy copy of `truth`. Draws are independent per (time, state)
/// entry, taken in row-major order from a generator seeded with `cfg.seed`.
pub fn add_noise(truth: &StateGrid, cfg: &NoiseConfig) -> Result<StateGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    add_noise_with(truth, cfg, &mut rng)
}

pub fn add_noise_with<R: Rng>(truth: &StateGrid, cfg: &NoiseConfig, rng: &mut R) -> Result<StateGrid> {
    let d = truth.state_dim();
    if cfg.sigmas.len() != d {
        return Err(WendyError::Dimension(format!("{} sigmas for {d} states", cfg.sigmas.len())));
    }
    if let Some(s) = cfg.sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(WendyError::Config(format!("noise σ must be finite and nonnegative, got {s}")));
    }
    let clean = truth.states();
    if cfg.kind == NoiseKind::TruncatedNormal {
        if let Some(v) = clean.iter().find(|v| **v < 0.0) {
            return Err(WendyError::InvalidModel(format!("truncated noise needs nonnegative true states, found {v}")));
        }
    }
    let std_normal = Normal::standard();
    let mut noisy = DMatrix::zeros(clean.nrows(), d);
    for m in 0..clean.nrows() {
        for i in 0..d {
            let u = clean[(m, i)];
            let sigma = cfg.sigmas[i];
            noisy[(m, i)] = match cfg.kind {
                NoiseKind::AdditiveNormal => u + sigma * rng.sample::<f64, _>(StandardNormal),
                NoiseKind::CensoredNormal => (u + sigma * rng.sample::<f64, _>(StandardNormal)).max(0.0),
                NoiseKind::TruncatedNormal => {
                    let v: f64 = rng.sample(Open01);
                    if sigma == 0.0 {
                        u
                    } else {
                        // z ~ N(0,1) conditioned on z > -u/σ, by inversion of the upper tail
                        let tail = std_normal.cdf(u / sigma);
                        let z = -std_normal.inverse_cdf(v * tail);
                        (u + sigma * z).max(0.0)
                    }
                }
                NoiseKind::MultiplicativeLogNormal => u * (sigma * rng.sample::<f64, _>(StandardNormal)).exp(),
            };
        }
    }
    truth.with_states(noisy)
}

fn rms<I: Iterator<Item = f64>>(values: I) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (sum / n as f64).sqrt()
}

/// `‖u* − U‖_rms / ‖U‖_rms` over all entries.
pub fn empirical_noise_ratio(truth: &StateGrid, noisy: &StateGrid) -> Result<f64> {
    check_congruent(truth, noisy)?;
    let denom = rms(noisy.states().iter().copied());
    if denom == 0.0 {
        return Err(WendyError::UndefinedRatio);
    }
    let num = rms(truth.states().iter().zip(noisy.states().iter()).map(|(a, b)| a - b));
    Ok(num / denom)
}

/// `mean((U − u*)²) / ‖u*‖²_rms`, the squared-deviation form of the noise ratio.
pub fn squared_noise_ratio(truth: &StateGrid, noisy: &StateGrid) -> Result<f64> {
    check_congruent(truth, noisy)?;
    let denom = rms(truth.states().iter().copied()).powi(2);
    if denom == 0.0 {
        return Err(WendyError::UndefinedRatio);
    }
    let num = rms(truth.states().iter().zip(noisy.states().iter()).map(|(a, b)| a - b)).powi(2);
    Ok(num / denom)
}

fn check_congruent(a: &StateGrid, b: &StateGrid) -> Result<()> {
    if a.states().shape() != b.states().shape() {
        return Err(WendyError::Dimension(format!(
            "grids differ: {:?} vs {:?}",
            a.states().shape(),
            b.states().shape()
        )));
    }
    Ok(())
}

/// E[(ε − 1)²] for ε = e^{N(0, σ²)}: `e^{σ²}(e^{σ²} − 1) + (e^{σ²/2} − 1)²`.
pub fn lognormal_noise_ratio(sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    s2.exp() * s2.exp_m1() + (0.5 * s2).exp_m1().powi(2)
}

//! Layered run settings: command-line flags override a TOML config file,
//! which overrides built-in defaults. The fully resolved settings are what a
//! manifest records, so a replay does not depend on defaults at replay time.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wendy::estimator::EstimatorConfig;
use wendy::harness::{
    default_noise_schedule, default_resolution_gamma, default_resolution_schedule, ExperimentConfig, SweepMode,
    DEFAULT_BOOTSTRAP_SAMPLES, DEFAULT_HISTOGRAM_BINS, DEFAULT_HISTOGRAM_TIMES, DEFAULT_REPLICATES, FULL_REPLICATES,
};
use wendy::models::Benchmark;
use wendy::noise::{MlnTarget, NoiseKind};
use wendy::simulate::DEFAULT_SUBSTEPS;
use wendy::weakform::DEFAULT_ETA;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Fit,
    Experiment,
    SweepNoise,
    SweepResolution,
    Bootstrap,
}

/// Every tunable. `None` means "not set at this layer".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub model: Option<String>,
    /// `normal`, `acn`, `atn`, `mln`, or `none` for noise-free data.
    pub noise: Option<String>,
    pub gamma: Option<Vec<f64>>,
    pub points: Option<Vec<usize>>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub full: Option<bool>,
    pub horizon: Option<f64>,
    pub substeps: Option<usize>,
    pub test_functions: Option<usize>,
    pub radius_mult: Option<usize>,
    pub eta: Option<f64>,
    pub ci_level: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub ridge: Option<f64>,
    pub filter_order: Option<usize>,
    pub mln_target: Option<MlnTarget>,
    pub input: Option<PathBuf>,
    pub samples: Option<usize>,
    pub bins: Option<usize>,
    pub histogram_times: Option<usize>,
    pub svg: Option<bool>,
    pub raw: Option<bool>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($field:ident),*) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl Settings {
    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &Settings) -> Settings {
        overlay!(
            self,
            top,
            model,
            noise,
            gamma,
            points,
            replicates,
            seed,
            out_dir,
            threads,
            full,
            horizon,
            substeps,
            test_functions,
            radius_mult,
            eta,
            ci_level,
            tol,
            max_iter,
            ridge,
            filter_order,
            mln_target,
            input,
            samples,
            bins,
            histogram_times,
            svg,
            raw
        );
        self
    }

    pub fn from_toml_file(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn benchmark(&self) -> Result<Benchmark, CliError> {
        let name = self.model.as_deref().ok_or_else(|| CliError::Usage("--model is required".into()))?;
        Ok(name.parse::<Benchmark>()?)
    }

    /// `None` for noise-free runs.
    pub fn noise_kind(&self) -> Result<Option<NoiseKind>, CliError> {
        match self.noise.as_deref() {
            None | Some("none") => Ok(None),
            Some(s) => Ok(Some(s.parse()?)),
        }
    }

    /// Fills every unset field with the default for `command`.
    pub fn resolve(self, command: Command) -> Result<Settings, CliError> {
        let bench = self.benchmark()?;
        let model = bench.spec();
        let mut s = self;
        s.model = Some(bench.name().to_string());
        let experiment = matches!(command, Command::Experiment | Command::SweepNoise | Command::SweepResolution);
        if s.noise.is_none() {
            s.noise = Some(if experiment { "normal" } else { "none" }.to_string());
        }
        let kind = s.noise_kind()?;
        if experiment && kind.is_none() {
            return Err(CliError::Usage("experiments need a noise kind".into()));
        }
        if s.gamma.is_none() {
            s.gamma = match (command, kind) {
                (Command::SweepNoise, Some(k)) => Some(default_noise_schedule(bench, k).ok_or_else(|| {
                    CliError::Usage(format!("no default {k} schedule for {}; pass --gamma", bench.name()))
                })?),
                (Command::SweepResolution, Some(k)) => Some(vec![default_resolution_gamma(bench, k)]),
                (_, Some(_)) => Some(vec![0.05]),
                (_, None) => Some(Vec::new()),
            };
        }
        if s.points.is_none() {
            s.points = Some(match command {
                Command::SweepResolution => default_resolution_schedule(bench),
                _ => vec![model.default_points()],
            });
        }
        let full = *s.full.get_or_insert(false);
        s.replicates.get_or_insert(if full { FULL_REPLICATES } else { DEFAULT_REPLICATES });
        s.seed.get_or_insert(0);
        s.out_dir.get_or_insert_with(|| PathBuf::from("wendy-out"));
        s.horizon.get_or_insert(model.default_horizon());
        s.substeps.get_or_insert(DEFAULT_SUBSTEPS);
        s.eta.get_or_insert(DEFAULT_ETA);
        let est = EstimatorConfig::default();
        s.ci_level.get_or_insert(est.ci_level);
        s.tol.get_or_insert(est.tol);
        s.max_iter.get_or_insert(est.max_iter);
        s.ridge.get_or_insert(est.ridge);
        s.filter_order.get_or_insert(est.filter_order);
        s.mln_target.get_or_insert(MlnTarget::default());
        s.samples.get_or_insert(DEFAULT_BOOTSTRAP_SAMPLES);
        s.bins.get_or_insert(DEFAULT_HISTOGRAM_BINS);
        s.histogram_times.get_or_insert(DEFAULT_HISTOGRAM_TIMES);
        s.svg.get_or_insert(true);
        s.raw.get_or_insert(true);
        s.check(command)?;
        Ok(s)
    }

    fn check(&self, command: Command) -> Result<(), CliError> {
        let gammas = self.gammas();
        let points = self.points.as_deref().unwrap_or_default();
        if points.is_empty() {
            return Err(CliError::Usage("need at least one grid size".into()));
        }
        if let Some(p) = points.iter().find(|&&p| p < 3) {
            return Err(CliError::Usage(format!("grid size {p} is below 3 points")));
        }
        if self.noise_kind()?.is_some() && gammas.is_empty() {
            return Err(CliError::Usage("a noise kind needs --gamma".into()));
        }
        if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
            return Err(CliError::Usage(format!("noise level {g} outside (0, 1]")));
        }
        match command {
            Command::SweepNoise if gammas.windows(2).any(|w| w[1] <= w[0]) => {
                return Err(CliError::Usage("noise schedule must be strictly increasing".into()));
            }
            Command::SweepResolution if points.windows(2).any(|w| w[1] <= w[0]) => {
                return Err(CliError::Usage("resolution schedule must be strictly increasing".into()));
            }
            _ => {}
        }
        if self.replicates == Some(0) {
            return Err(CliError::Usage("--replicates must be at least 1".into()));
        }
        if self.samples == Some(0) || self.bins == Some(0) {
            return Err(CliError::Usage("--samples and --bins must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        self.estimator().validate()?;
        Ok(())
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.gamma.clone().unwrap_or_default()
    }

    pub fn first_points(&self) -> usize {
        self.points.as_ref().and_then(|p| p.first().copied()).unwrap_or(3)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("wendy-out"))
    }

    pub fn estimator(&self) -> EstimatorConfig {
        let d = EstimatorConfig::default();
        EstimatorConfig {
            basis: wendy::weakform::BasisConfig {
                test_functions: self.test_functions,
                radius_mult: self.radius_mult,
                eta: self.eta.unwrap_or(d.basis.eta),
            },
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            ridge: self.ridge.unwrap_or(d.ridge),
            filter_order: self.filter_order.unwrap_or(d.filter_order),
            ci_level: self.ci_level.unwrap_or(d.ci_level),
        }
    }

    /// Experiment configuration for a resolved setting.
    pub fn experiment(&self, mode: SweepMode) -> Result<ExperimentConfig, CliError> {
        let kind = self.noise_kind()?.ok_or_else(|| CliError::Usage("experiments need a noise kind".into()))?;
        Ok(ExperimentConfig {
            model: self.benchmark()?.name().to_string(),
            noise: kind,
            gammas: self.gammas(),
            points: self.points.clone().unwrap_or_default(),
            replicates: self.replicates.unwrap_or(DEFAULT_REPLICATES),
            seed: self.seed.unwrap_or(0),
            mode,
            estimator: self.estimator(),
            horizon: self.horizon,
            substeps: self.substeps.unwrap_or(DEFAULT_SUBSTEPS),
            mln_target: self.mln_target.unwrap_or_default(),
            threads: self.threads,
        })
    }
}

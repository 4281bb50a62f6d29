mod commands;
mod error;
mod manifest;
mod settings;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wendy::noise::MlnTarget;

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::settings::{Command, Settings};

#[derive(Parser)]
#[command(name = "wendy", version, about = "Weak-form ODE parameter estimation and coverage experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Sub {
    /// Simulate a benchmark trajectory, optionally with noise.
    Simulate,
    /// Fit a trajectory CSV (or simulated data) and write a JSON report.
    Fit,
    /// Replicated fits at one noise level and grid size.
    Experiment,
    /// Replicated fits over increasing noise levels.
    SweepNoise,
    /// Replicated fits over increasing grid sizes.
    SweepResolution,
    /// Fit, then draw a parametric bootstrap cloud of solutions.
    Bootstrap,
    /// Re-run the command recorded in a manifest.
    Replay { manifest: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum MlnTargetArg {
    /// Multiplicative variance equals range·γ.
    Range,
    /// Multiplicative variance equals (range·γ)².
    RangeSquared,
}

#[derive(Args)]
struct Flags {
    /// Benchmark: logistic, lotka_volterra (lv), fitzhugh_nagumo (fhn), hindmarsh_rose (hmr), ptb.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Noise kind: normal, acn, atn, mln, or none.
    #[arg(long, global = true)]
    noise: Option<String>,
    /// Noise level(s) as a fraction of each state's range; comma separated for sweeps.
    #[arg(long, global = true, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    /// Grid size(s) M+1; comma separated for resolution sweeps.
    #[arg(long, global = true, value_delimiter = ',')]
    points: Option<Vec<usize>>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Full-scale replicate count (1000).
    #[arg(long, global = true)]
    full: bool,
    /// TOML file with any of the settings above (flags take precedence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// RK4 steps per output interval.
    #[arg(long, global = true)]
    substeps: Option<usize>,
    /// Number of test functions K.
    #[arg(long = "test-functions", visible_alias = "K", global = true)]
    test_functions: Option<usize>,
    /// Test-function support half-width in grid steps.
    #[arg(long, global = true)]
    radius_mult: Option<usize>,
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    ci_level: Option<f64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    #[arg(long, global = true)]
    ridge: Option<f64>,
    #[arg(long, global = true)]
    filter_order: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mln_target: Option<MlnTargetArg>,
    /// Trajectory CSV to fit instead of simulating.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Bootstrap draws.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Histogram bins.
    #[arg(long, global = true)]
    bins: Option<usize>,
    /// Number of histogram time points.
    #[arg(long, global = true)]
    histogram_times: Option<usize>,
    /// Skip SVG output.
    #[arg(long, global = true)]
    no_svg: bool,
    /// Skip the per-replicate CSV.
    #[arg(long, global = true)]
    no_raw: bool,
}

impl Flags {
    fn settings(&self) -> Settings {
        Settings {
            model: self.model.clone(),
            noise: self.noise.clone(),
            gamma: self.gamma.clone(),
            points: self.points.clone(),
            replicates: self.replicates,
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            threads: self.threads,
            full: self.full.then_some(true),
            horizon: self.horizon,
            substeps: self.substeps,
            test_functions: self.test_functions,
            radius_mult: self.radius_mult,
            eta: self.eta,
            ci_level: self.ci_level,
            tol: self.tol,
            max_iter: self.max_iter,
            ridge: self.ridge,
            filter_order: self.filter_order,
            mln_target: self.mln_target.map(|t| match t {
                MlnTargetArg::Range => MlnTarget::RangeTimesGamma,
                MlnTargetArg::RangeSquared => MlnTarget::RangeTimesGammaSquared,
            }),
            input: self.input.clone(),
            samples: self.samples,
            bins: self.bins,
            histogram_times: self.histogram_times,
            svg: self.no_svg.then_some(false),
            raw: self.no_raw.then_some(false),
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let flags = cli.flags.settings();
    let (command, base) = match cli.command {
        Sub::Replay { manifest } => {
            let m = RunManifest::read(&manifest)?;
            (m.command, m.settings)
        }
        Sub::Simulate => (Command::Simulate, Settings::default()),
        Sub::Fit => (Command::Fit, Settings::default()),
        Sub::Experiment => (Command::Experiment, Settings::default()),
        Sub::SweepNoise => (Command::SweepNoise, Settings::default()),
        Sub::SweepResolution => (Command::SweepResolution, Settings::default()),
        Sub::Bootstrap => (Command::Bootstrap, Settings::default()),
    };
    let file = match &cli.flags.config {
        Some(path) => Settings::from_toml_file(path)?,
        None => Settings::default(),
    };
    let settings = base.overlay(&file).overlay(&flags).resolve(command)?;

    let started_at = chrono::Utc::now().to_rfc3339();
    let outputs = commands::run(command, &settings)?;
    let manifest = RunManifest {
        command,
        seed: settings.seed.unwrap_or(0),
        settings: settings.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        outputs,
    };
    manifest.write(&settings.out_dir())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::Path;

use wendy::estimator::fit;
use wendy::harness::{
    bootstrap_cloud, default_time_indices, run_experiment, state_histograms, write_raw_csv, write_results_csv,
    BootstrapConfig, ExperimentResult, SweepMode,
};
use wendy::models::ModelSpec;
use wendy::noise::{add_noise, NoiseConfig};
use wendy::simulate::{truth, StateGrid};

use crate::error::CliError;
use crate::settings::{Command, Settings};
use crate::svg::{self, Panel, Series, Style};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const FIT_FILE: &str = "fit.json";
pub const RESULTS_FILE: &str = "results.csv";
pub const RAW_FILE: &str = "raw.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CLOUD_FILE: &str = "cloud.csv";
pub const DRAWS_FILE: &str = "draws.csv";
pub const HISTOGRAM_FILE: &str = "histograms.csv";

/// Writes `bytes` to `dir/name` and records the name.
struct Outputs<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs { dir, names: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), bytes)
            .map_err(|e| CliError::Output(format!("cannot write {name}: {e}")))?;
        self.names.push(name.to_string());
        Ok(())
    }
}

/// Runs a resolved command and returns the files written.
pub fn run(command: Command, s: &Settings) -> Result<Vec<String>, CliError> {
    let dir = s.out_dir();
    let mut out = Outputs::new(&dir)?;
    match command {
        Command::Simulate => simulate(s, &mut out)?,
        Command::Fit => fit_cmd(s, &mut out)?,
        Command::Experiment => experiment(s, SweepMode::Single, &mut out)?,
        Command::SweepNoise => experiment(s, SweepMode::Noise, &mut out)?,
        Command::SweepResolution => experiment(s, SweepMode::Resolution, &mut out)?,
        Command::Bootstrap => bootstrap(s, &mut out)?,
    }
    Ok(out.names)
}

/// Noise-free or noisy data on the first configured grid.
fn generate(s: &Settings, model: &ModelSpec) -> Result<StateGrid, CliError> {
    let clean = truth(model, s.horizon.unwrap_or(model.default_horizon()), s.first_points(), s.substeps.unwrap_or(20))?;
    match s.noise_kind()? {
        None => Ok(clean),
        Some(kind) => {
            let gamma = s.gammas()[0];
            let cfg =
                NoiseConfig::calibrated(kind, &clean, gamma, s.mln_target.unwrap_or_default(), s.seed.unwrap_or(0))?;
            Ok(add_noise(&clean, &cfg)?)
        }
    }
}

/// Data from `--input` when given, otherwise simulated.
fn load_or_generate(s: &Settings, model: &ModelSpec) -> Result<StateGrid, CliError> {
    match &s.input {
        Some(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| CliError::Usage(format!("cannot open input {}: {e}", path.display())))?;
            let grid = StateGrid::read_csv(file)?;
            if grid.state_dim() != model.state_dim() {
                return Err(CliError::Usage(format!(
                    "input has {} state columns, {} has {}",
                    grid.state_dim(),
                    model.name(),
                    model.state_dim()
                )));
            }
            Ok(grid)
        }
        None => generate(s, model),
    }
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn trajectory_panels(grid: &StateGrid, title: &str) -> Vec<Panel> {
    (0..grid.state_dim())
        .map(|i| Panel {
            title: format!("{title}: u{}", i + 1),
            x_label: "t".into(),
            y_label: format!("u{}", i + 1),
            series: vec![Series {
                label: String::new(),
                points: grid.times().into_iter().zip(grid.states().column(i).iter().copied()).collect(),
                style: Style::Emphasis,
            }],
        })
        .collect()
}

fn simulate(s: &Settings, out: &mut Outputs) -> Result<(), CliError> {
    let model = s.benchmark()?.spec();
    let grid = generate(s, &model)?;
    out.write(TRAJECTORY_FILE, &csv_bytes(|b| Ok(grid.write_csv(b)?))?)?;
    if s.svg.unwrap_or(true) {
        out.write("trajectory.svg", svg::render(&trajectory_panels(&grid, model.name())).as_bytes())?;
    }
    println!("{}: {} points, {} states", model.name(), grid.points(), grid.state_dim());
    Ok(())
}

fn fit_cmd(s: &Settings, out: &mut Outputs) -> Result<(), CliError> {
    let model = s.benchmark()?.spec();
    let data = load_or_generate(s, &model)?;
    let result = fit(&model, &data, &s.estimator())?;
    let json = serde_json::to_string_pretty(&result.report())? + "\n";
    out.write(FIT_FILE, json.as_bytes())?;
    print!("{json}");
    Ok(())
}

fn experiment(s: &Settings, mode: SweepMode, out: &mut Outputs) -> Result<(), CliError> {
    let cfg = s.experiment(mode)?;
    let result = run_experiment(&cfg)?;
    out.write(RESULTS_FILE, &csv_bytes(|b| Ok(write_results_csv(&result, b)?))?)?;
    if s.raw.unwrap_or(true) {
        out.write(RAW_FILE, &csv_bytes(|b| Ok(write_raw_csv(&result, b)?))?)?;
    }
    out.write(SUMMARY_FILE, (serde_json::to_string_pretty(&result)? + "\n").as_bytes())?;
    if s.svg.unwrap_or(true) {
        out.write("coverage.svg", svg::render(&[coverage_panel(&result)]).as_bytes())?;
    }
    print_table(&result);
    Ok(())
}

fn coverage_panel(result: &ExperimentResult) -> Panel {
    let names = result.levels.first().map(|l| l.param_names.clone()).unwrap_or_default();
    let mut series: Vec<Series> = names
        .iter()
        .enumerate()
        .map(|(i, name)| Series {
            label: name.clone(),
            points: result.levels.iter().map(|l| (l.level_value(), l.coverage[i])).collect(),
            style: Style::Palette,
        })
        .collect();
    let xs: Vec<f64> = result.levels.iter().map(|l| l.level_value()).collect();
    if let (Some(&lo), Some(&hi)) = (xs.first(), xs.last()) {
        for y in [0.95, 0.5] {
            series.push(Series { label: String::new(), points: vec![(lo, y), (hi, y)], style: Style::Reference });
        }
    }
    let x_label = if result.config.mode == SweepMode::Resolution { "data points" } else { "noise level" };
    Panel {
        title: format!("{} / {}: coverage", result.config.model, result.config.noise),
        x_label: x_label.into(),
        y_label: "coverage".into(),
        series,
    }
}

fn print_table(result: &ExperimentResult) {
    for level in &result.levels {
        let cov: Vec<String> =
            level.param_names.iter().zip(&level.coverage).map(|(n, c)| format!("{n}={c:.3}")).collect();
        let flag = if level.valid { "" } else { " [invalid]" };
        println!(
            "{} {}: {} ok, {} failed{flag}; coverage {}",
            level.level_kind,
            level.level_value(),
            level.n_success,
            level.n_fail,
            cov.join(" ")
        );
    }
    if let Some(reason) = &result.stop_reason {
        println!("stop: {}", serde_json::to_string(reason).unwrap_or_default());
    }
}

fn bootstrap(s: &Settings, out: &mut Outputs) -> Result<(), CliError> {
    let model = s.benchmark()?.spec();
    let data = load_or_generate(s, &model)?;
    let result = fit(&model, &data, &s.estimator())?;
    out.write(FIT_FILE, (serde_json::to_string_pretty(&result.report())? + "\n").as_bytes())?;

    let u0: Vec<f64> = data.states().row(0).iter().copied().collect();
    let u0 = if s.input.is_some() { u0 } else { model.u0().to_vec() };
    let cfg = BootstrapConfig {
        samples: s.samples.unwrap_or(100),
        seed: s.seed.unwrap_or(0),
        substeps: s.substeps.unwrap_or(20),
    };
    let cloud = bootstrap_cloud(&result, &model, &u0, data.t0(), data.dt(), data.points(), &cfg)?;

    let d = model.state_dim();
    let cloud_csv = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        let mut header = vec!["sample".to_string(), "t".to_string()];
        header.extend((1..=d).map(|i| format!("u{i}")));
        w.write_record(&header)?;
        let mut emit = |label: &str, g: &StateGrid| -> Result<(), CliError> {
            for m in 0..g.points() {
                let mut rec = vec![label.to_string(), format!("{:.12e}", g.time(m))];
                rec.extend(g.states().row(m).iter().map(|v| format!("{v:.12e}")));
                w.write_record(&rec)?;
            }
            Ok(())
        };
        emit("central", &cloud.central)?;
        for (k, sample) in cloud.samples.iter().enumerate() {
            if let Some(g) = &sample.trajectory {
                emit(&k.to_string(), g)?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    out.write(CLOUD_FILE, &cloud_csv)?;

    let draws_csv = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        let mut header = vec!["sample".to_string(), "diverged".to_string()];
        header.extend(model.param_names());
        w.write_record(&header)?;
        for (k, sample) in cloud.samples.iter().enumerate() {
            let mut rec = vec![k.to_string(), u8::from(sample.trajectory.is_none()).to_string()];
            rec.extend(sample.params.iter().map(|v| format!("{v:.12e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.write(DRAWS_FILE, &draws_csv)?;

    let trajectories = cloud.trajectories();
    let indices = default_time_indices(data.points(), s.histogram_times.unwrap_or(8));
    let hists = state_histograms(&trajectories, &indices, s.bins.unwrap_or(30))?;
    let hist_csv = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["index", "t", "state", "bin", "bin_lo", "bin_hi", "count"])?;
        for h in &hists {
            let width = (h.hi - h.lo) / h.counts.len() as f64;
            for (bin, &count) in h.counts.iter().enumerate() {
                w.write_record([
                    h.index.to_string(),
                    format!("{:.12e}", h.time),
                    format!("u{}", h.state + 1),
                    bin.to_string(),
                    format!("{:.12e}", h.lo + bin as f64 * width),
                    format!("{:.12e}", h.lo + (bin + 1) as f64 * width),
                    count.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    out.write(HISTOGRAM_FILE, &hist_csv)?;

    if s.svg.unwrap_or(true) {
        let panels: Vec<Panel> = (0..d)
            .map(|i| {
                let curve = |g: &StateGrid| -> Vec<(f64, f64)> {
                    g.times().into_iter().zip(g.states().column(i).iter().copied()).collect()
                };
                let mut series: Vec<Series> = trajectories
                    .iter()
                    .map(|g| Series { label: String::new(), points: curve(g), style: Style::Faint })
                    .collect();
                series.push(Series { label: "data".into(), points: curve(&data), style: Style::Palette });
                series.push(Series { label: String::new(), points: curve(&cloud.central), style: Style::Emphasis });
                Panel {
                    title: format!("{}: u{} bootstrap cloud", model.name(), i + 1),
                    x_label: "t".into(),
                    y_label: format!("u{}", i + 1),
                    series,
                }
            })
            .collect();
        out.write("cloud.svg", svg::render(&panels).as_bytes())?;
    }
    println!("{} bootstrap samples, {} diverged; {} histograms", cloud.samples.len(), cloud.diverged(), hists.len());
    Ok(())
}

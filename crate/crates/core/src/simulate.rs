//! Noise-free reference trajectories on a uniform grid via fixed-step RK4.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Result, WendyError};
use crate::models::ModelSpec;

/// Default number of RK4 steps per output interval.
pub const DEFAULT_SUBSTEPS: usize = 20;

/// States sampled on the uniform grid `t_m = t0 + m·dt`, `m = 0..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    t0: f64,
    dt: f64,
    states: DMatrix<f64>,
}

impl StateGrid {
    pub fn new(t0: f64, dt: f64, states: DMatrix<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(WendyError::Config(format!("grid step must be positive and finite, got {dt}")));
        }
        if states.nrows() < 2 || states.ncols() == 0 {
            return Err(WendyError::Dimension(format!(
                "state matrix must have at least 2 rows and 1 column, got {:?}",
                states.shape()
            )));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(WendyError::Config("state matrix has non-finite entries".into()));
        }
        Ok(StateGrid { t0, dt, states })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of intervals M (one less than the number of points).
    pub fn segments(&self) -> usize {
        self.states.nrows() - 1
    }

    pub fn points(&self) -> usize {
        self.states.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.segments())
    }

    pub fn time(&self, m: usize) -> f64 {
        self.t0 + m as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.points()).map(|m| self.time(m)).collect()
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn into_states(self) -> DMatrix<f64> {
        self.states
    }

    /// Same grid, different state values.
    pub fn with_states(&self, states: DMatrix<f64>) -> Result<Self> {
        if states.shape() != self.states.shape() {
            return Err(WendyError::Dimension(format!(
                "replacement states are {:?}, grid is {:?}",
                states.shape(),
                self.states.shape()
            )));
        }
        StateGrid::new(self.t0, self.dt, states)
    }

    /// Per-state `max - min`.
    pub fn ranges(&self) -> Vec<f64> {
        self.states.column_iter().map(|c| c.max() - c.min()).collect()
    }

    /// Writes `t,u1,...,ud` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.state_dim()).map(|i| format!("u{i}")));
        out.write_record(&header)?;
        for m in 0..self.points() {
            let mut rec = vec![format!("{:.16e}", self.time(m))];
            rec.extend(self.states.row(m).iter().map(|v| format!("{v:.16e}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a trajectory written by [`write_csv`](Self::write_csv). The time
    /// column must be uniform to within 1e-9 relative.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "t" {
            return Err(WendyError::Io("trajectory CSV must start with a `t` column".into()));
        }
        let d = headers.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| WendyError::Io(format!("bad number `{s}`: {e}")));
            times.push(parse(&rec[0])?);
            for field in rec.iter().skip(1) {
                values.push(parse(field)?);
            }
        }
        if times.len() < 2 {
            return Err(WendyError::Io("trajectory CSV needs at least two rows".into()));
        }
        let t0 = times[0];
        let dt = (times[times.len() - 1] - t0) / (times.len() - 1) as f64;
        for (m, &t) in times.iter().enumerate() {
            let expect = t0 + m as f64 * dt;
            if (t - expect).abs() > 1e-9 * (1.0 + expect.abs()) {
                return Err(WendyError::Io(format!("time column is not uniform at row {m}")));
            }
        }
        StateGrid::new(t0, dt, DMatrix::from_row_slice(times.len(), d, &values))
    }
}

/// Integrates `du/dt = Θ(u) W` from `t0` to `horizon` and samples `M + 1`
/// equally spaced points, taking `substeps` classical RK4 steps per interval.
pub fn integrate(
    model: &ModelSpec,
    w: &DMatrix<f64>,
    u0: &[f64],
    t0: f64,
    horizon: f64,
    segments: usize,
    substeps: usize,
) -> Result<StateGrid> {
    if !(horizon > t0) {
        return Err(WendyError::Config(format!("horizon {horizon} must exceed t0 {t0}")));
    }
    if segments < 2 {
        return Err(WendyError::Config(format!("need at least 2 segments, got {segments}")));
    }
    if substeps == 0 {
        return Err(WendyError::Config("substeps must be at least 1".into()));
    }
    let d = model.state_dim();
    if u0.len() != d {
        return Err(WendyError::Dimension(format!("u0 has {} entries, model has {d} states", u0.len())));
    }
    let dt = (horizon - t0) / segments as f64;
    let h = dt / substeps as f64;

    let mut states = DMatrix::zeros(segments + 1, d);
    let mut u = u0.to_vec();
    states.row_mut(0).copy_from_slice(&u);

    let mut scratch = vec![0.0; model.feature_count()];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    for m in 0..segments {
        for s in 0..substeps {
            let time = t0 + m as f64 * dt + s as f64 * h;
            let fail = |_| WendyError::Divergence { time };
            model.rhs_into(&u, w, &mut scratch, &mut k1).map_err(fail)?;
            axpy_into(&u, 0.5 * h, &k1, &mut tmp);
            model.rhs_into(&tmp, w, &mut scratch, &mut k2).map_err(fail)?;
            axpy_into(&u, 0.5 * h, &k2, &mut tmp);
            model.rhs_into(&tmp, w, &mut scratch, &mut k3).map_err(fail)?;
            axpy_into(&u, h, &k3, &mut tmp);
            model.rhs_into(&tmp, w, &mut scratch, &mut k4).map_err(fail)?;
            for i in 0..d {
                u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(WendyError::Divergence { time: time + h });
            }
        }
        states.row_mut(m + 1).copy_from_slice(&u);
    }
    StateGrid::new(t0, dt, states)
}

fn axpy_into(x: &[f64], a: f64, y: &[f64], out: &mut [f64]) {
    for ((o, &xi), &yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + a * yi;
    }
}

/// True trajectory of a model at its default horizon and the given grid size.
pub fn truth(model: &ModelSpec, horizon: f64, points: usize, substeps: usize) -> Result<StateGrid> {
    if points < 3 {
        return Err(WendyError::Config(format!("need at least 3 grid points, got {points}")));
    }
    integrate(model, model.true_params(), model.u0(), 0.0, horizon, points - 1, substeps)
}

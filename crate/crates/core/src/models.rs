//! Benchmark ODE systems written in linear-in-parameters form `du/dt = Θ(u) W`.
//!
//! A [`ModelSpec`] carries a closed-form feature library Θ, its gradient with
//! respect to the state, the true parameter matrix and the initial condition.
//! The parameter matrix is stored J×d: column `i` holds the coefficients of the
//! i-th equation, with zeros for features that equation does not use. The
//! reporting order of the nonzero ("active") coefficients is kept explicitly so
//! that `w1, w2, ...` match the order the terms are written in each equation.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Result, WendyError};

/// Fills `out[j]` with feature `j` evaluated at the state.
pub type FeatureMap = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Fills `out[j * d + l]` with ∂f_j/∂u_l.
pub type GradientMap = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Michaelis constant hard-coded in the PTB rational feature.
pub const PTB_MICHAELIS: f64 = 0.3;

/// The five benchmark systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Benchmark {
    Logistic,
    LotkaVolterra,
    FitzHughNagumo,
    HindmarshRose,
    Ptb,
}

impl Benchmark {
    pub const ALL: [Benchmark; 5] = [
        Benchmark::Logistic,
        Benchmark::LotkaVolterra,
        Benchmark::FitzHughNagumo,
        Benchmark::HindmarshRose,
        Benchmark::Ptb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Logistic => "logistic",
            Benchmark::LotkaVolterra => "lotka_volterra",
            Benchmark::FitzHughNagumo => "fitzhugh_nagumo",
            Benchmark::HindmarshRose => "hindmarsh_rose",
            Benchmark::Ptb => "ptb",
        }
    }

    pub fn valid_names() -> String {
        Benchmark::ALL.map(|b| b.name()).join(", ")
    }

    pub fn spec(self) -> ModelSpec {
        match self {
            Benchmark::Logistic => logistic(),
            Benchmark::LotkaVolterra => lotka_volterra(),
            Benchmark::FitzHughNagumo => fitzhugh_nagumo(),
            Benchmark::HindmarshRose => hindmarsh_rose(),
            Benchmark::Ptb => ptb(),
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = WendyError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Benchmark::Logistic),
            "lotka_volterra" | "lv" => Ok(Benchmark::LotkaVolterra),
            "fitzhugh_nagumo" | "fhn" => Ok(Benchmark::FitzHughNagumo),
            "hindmarsh_rose" | "hmr" => Ok(Benchmark::HindmarshRose),
            "ptb" => Ok(Benchmark::Ptb),
            other => Err(WendyError::UnknownModel { name: other.to_string(), valid: Benchmark::valid_names() }),
        }
    }
}

/// Looks up a benchmark by name (short aliases `lv`, `fhn`, `hmr` are accepted).
pub fn get_benchmark(name: &str) -> Result<ModelSpec> {
    name.parse::<Benchmark>().map(Benchmark::spec)
}

/// Everything needed to build a [`ModelSpec`].
pub struct ModelParts {
    pub name: String,
    pub state_dim: usize,
    pub feature_names: Vec<String>,
    pub features: FeatureMap,
    pub gradients: GradientMap,
    pub true_params: DMatrix<f64>,
    /// `(feature, state)` index pairs of the free parameters, in reporting order.
    pub active: Vec<(usize, usize)>,
    pub u0: Vec<f64>,
    pub default_horizon: f64,
    pub default_points: usize,
    pub nonneg_states: bool,
}

/// An ODE system in the form `du/dt = Θ(u) W`. Immutable and cheap to clone.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    state_dim: usize,
    feature_names: Vec<String>,
    features: FeatureMap,
    gradients: GradientMap,
    true_params: DMatrix<f64>,
    active: Vec<(usize, usize)>,
    u0: Vec<f64>,
    default_horizon: f64,
    default_points: usize,
    nonneg_states: bool,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("feature_names", &self.feature_names)
            .field("active", &self.active)
            .field("u0", &self.u0)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn new(parts: ModelParts) -> Result<Self> {
        let j = parts.feature_names.len();
        let d = parts.state_dim;
        if d == 0 || j == 0 {
            return Err(WendyError::Dimension("model needs at least one state and one feature".into()));
        }
        if parts.true_params.shape() != (j, d) {
            return Err(WendyError::Dimension(format!(
                "true parameters are {:?}, expected ({j}, {d})",
                parts.true_params.shape()
            )));
        }
        if parts.u0.len() != d {
            return Err(WendyError::Dimension(format!("u0 has {} entries, expected {d}", parts.u0.len())));
        }
        let mut seen = vec![false; j * d];
        for &(fj, si) in &parts.active {
            if fj >= j || si >= d || std::mem::replace(&mut seen[fj * d + si], true) {
                return Err(WendyError::Config(format!("bad active entry ({fj}, {si})")));
            }
        }
        for fj in 0..j {
            for si in 0..d {
                if !seen[fj * d + si] && parts.true_params[(fj, si)] != 0.0 {
                    return Err(WendyError::Config(format!(
                        "nonzero true parameter at ({fj}, {si}) is not listed as active"
                    )));
                }
            }
        }
        if parts.default_points < 3 || !(parts.default_horizon > 0.0) {
            return Err(WendyError::Config("default grid needs at least 3 points and a positive horizon".into()));
        }
        Ok(ModelSpec {
            name: parts.name,
            state_dim: d,
            feature_names: parts.feature_names,
            features: parts.features,
            gradients: parts.gradients,
            true_params: parts.true_params,
            active: parts.active,
            u0: parts.u0,
            default_horizon: parts.default_horizon,
            default_points: parts.default_points,
            nonneg_states: parts.nonneg_states,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// State dimension `d`.
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Feature count `J`.
    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    /// Number of free parameters `P`.
    pub fn param_count(&self) -> usize {
        self.active.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn active(&self) -> &[(usize, usize)] {
        &self.active
    }

    /// `w1 .. wP`.
    pub fn param_names(&self) -> Vec<String> {
        (1..=self.active.len()).map(|i| format!("w{i}")).collect()
    }

    pub fn true_params(&self) -> &DMatrix<f64> {
        &self.true_params
    }

    pub fn true_active(&self) -> Vec<f64> {
        self.active_from_matrix(&self.true_params)
    }

    pub fn u0(&self) -> &[f64] {
        &self.u0
    }

    pub fn default_horizon(&self) -> f64 {
        self.default_horizon
    }

    pub fn default_points(&self) -> usize {
        self.default_points
    }

    pub fn nonneg_states(&self) -> bool {
        self.nonneg_states
    }

    /// Flattens a J×d parameter matrix to its active entries.
    pub fn active_from_matrix(&self, w: &DMatrix<f64>) -> Vec<f64> {
        self.active.iter().map(|&(j, i)| w[(j, i)]).collect()
    }

    /// Inverse of [`active_from_matrix`](Self::active_from_matrix); inactive entries are zero.
    pub fn matrix_from_active(&self, values: &[f64]) -> Result<DMatrix<f64>> {
        if values.len() != self.active.len() {
            return Err(WendyError::Dimension(format!(
                "{} parameter values for {} active parameters",
                values.len(),
                self.active.len()
            )));
        }
        let mut w = DMatrix::zeros(self.feature_count(), self.state_dim);
        for (&(j, i), &v) in self.active.iter().zip(values) {
            w[(j, i)] = v;
        }
        Ok(w)
    }

    /// Active feature indices for state `i`, in reporting order.
    pub fn active_features_of(&self, state: usize) -> Vec<usize> {
        self.active.iter().filter(|&&(_, i)| i == state).map(|&(j, _)| j).collect()
    }

    /// Feature row Θ(u). Values are not checked for finiteness.
    pub fn features_into(&self, u: &[f64], out: &mut [f64]) {
        (self.features)(u, out)
    }

    pub fn features(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.feature_count()];
        (self.features)(u, &mut out);
        out
    }

    /// Θ(U) for a state matrix with one row per time point.
    pub fn eval_features(&self, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_state_cols(states.ncols())?;
        let (rows, j) = (states.nrows(), self.feature_count());
        let mut theta = DMatrix::zeros(rows, j);
        let mut u = vec![0.0; self.state_dim];
        let mut row = vec![0.0; j];
        for m in 0..rows {
            for (l, ul) in u.iter_mut().enumerate() {
                *ul = states[(m, l)];
            }
            (self.features)(&u, &mut row);
            for (fj, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(WendyError::FeatureEvaluation { row: m, feature: fj });
                }
                theta[(m, fj)] = v;
            }
        }
        Ok(theta)
    }

    /// Right-hand side Θ(u) W.
    pub fn rhs(&self, u: &[f64], w: &DMatrix<f64>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.state_dim];
        let mut scratch = vec![0.0; self.feature_count()];
        self.rhs_into(u, w, &mut scratch, &mut out)?;
        Ok(out)
    }

    pub(crate) fn rhs_into(&self, u: &[f64], w: &DMatrix<f64>, scratch: &mut [f64], out: &mut [f64]) -> Result<()> {
        self.check_state_cols(u.len())?;
        self.check_params(w)?;
        (self.features)(u, scratch);
        for (fj, &v) in scratch.iter().enumerate() {
            if !v.is_finite() {
                return Err(WendyError::FeatureEvaluation { row: 0, feature: fj });
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = scratch.iter().enumerate().map(|(fj, &f)| f * w[(fj, i)]).sum();
        }
        Ok(())
    }

    /// d×d Jacobian ∂[Θ(u)W]/∂u, entry `(i, l)` = ∂(rhs_i)/∂u_l.
    pub fn state_jacobian(&self, u: &[f64], w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_state_cols(u.len())?;
        self.check_params(w)?;
        let mut grad = vec![0.0; self.feature_count() * self.state_dim];
        let mut jac = DMatrix::zeros(self.state_dim, self.state_dim);
        self.state_jacobian_into(u, w, &mut grad, &mut jac)?;
        Ok(jac)
    }

    pub(crate) fn state_jacobian_into(
        &self,
        u: &[f64],
        w: &DMatrix<f64>,
        grad: &mut [f64],
        jac: &mut DMatrix<f64>,
    ) -> Result<()> {
        let d = self.state_dim;
        (self.gradients)(u, grad);
        jac.fill(0.0);
        for fj in 0..self.feature_count() {
            for l in 0..d {
                let g = grad[fj * d + l];
                if !g.is_finite() {
                    return Err(WendyError::FeatureEvaluation { row: 0, feature: fj });
                }
                if g == 0.0 {
                    continue;
                }
                for i in 0..d {
                    jac[(i, l)] += w[(fj, i)] * g;
                }
            }
        }
        Ok(())
    }

    fn check_state_cols(&self, cols: usize) -> Result<()> {
        if cols != self.state_dim {
            return Err(WendyError::Dimension(format!(
                "{} state components for a {}-state model",
                cols, self.state_dim
            )));
        }
        Ok(())
    }

    fn check_params(&self, w: &DMatrix<f64>) -> Result<()> {
        if w.shape() != (self.feature_count(), self.state_dim) {
            return Err(WendyError::Dimension(format!(
                "parameter matrix is {:?}, expected ({}, {})",
                w.shape(),
                self.feature_count(),
                self.state_dim
            )));
        }
        Ok(())
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// du/dt = w1 u + w2 u².
fn logistic() -> ModelSpec {
    ModelSpec::new(ModelParts {
        name: "logistic".into(),
        state_dim: 1,
        feature_names: names(&["u", "u^2"]),
        features: Arc::new(|u, out| {
            out[0] = u[0];
            out[1] = u[0] * u[0];
        }),
        gradients: Arc::new(|u, out| {
            out[0] = 1.0;
            out[1] = 2.0 * u[0];
        }),
        true_params: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
        active: vec![(0, 0), (1, 0)],
        u0: vec![0.01],
        default_horizon: 10.0,
        default_points: 103,
        nonneg_states: true,
    })
    .expect("logistic model is well formed")
}

/// du1 = w1 u1 + w2 u1 u2, du2 = w3 u2 + w4 u1 u2.
fn lotka_volterra() -> ModelSpec {
    // features: u1, u2, u1 u2
    ModelSpec::new(ModelParts {
        name: "lotka_volterra".into(),
        state_dim: 2,
        feature_names: names(&["u1", "u2", "u1*u2"]),
        features: Arc::new(|u, out| {
            out[0] = u[0];
            out[1] = u[1];
            out[2] = u[0] * u[1];
        }),
        gradients: Arc::new(|u, out| {
            out.copy_from_slice(&[1.0, 0.0, 0.0, 1.0, u[1], u[0]]);
        }),
        true_params: DMatrix::from_row_slice(3, 2, &[3.0, 0.0, 0.0, -6.0, -1.0, 1.0]),
        active: vec![(0, 0), (2, 0), (1, 1), (2, 1)],
        u0: vec![1.0, 1.0],
        default_horizon: 5.0,
        default_points: 205,
        nonneg_states: true,
    })
    .expect("Lotka-Volterra model is well formed")
}

/// du1 = w1 u1 + w2 u1³ + w3 u2, du2 = w4 u1 + w5 + w6 u2.
fn fitzhugh_nagumo() -> ModelSpec {
    // features: u1, u1^3, u2, 1
    ModelSpec::new(ModelParts {
        name: "fitzhugh_nagumo".into(),
        state_dim: 2,
        feature_names: names(&["u1", "u1^3", "u2", "1"]),
        features: Arc::new(|u, out| {
            out[0] = u[0];
            out[1] = u[0] * u[0] * u[0];
            out[2] = u[1];
            out[3] = 1.0;
        }),
        gradients: Arc::new(|u, out| {
            out.copy_from_slice(&[1.0, 0.0, 3.0 * u[0] * u[0], 0.0, 0.0, 1.0, 0.0, 0.0]);
        }),
        true_params: DMatrix::from_row_slice(4, 2, &[3.0, -1.0 / 3.0, -3.0, 0.0, 3.0, 1.0 / 15.0, 0.0, 17.0 / 150.0]),
        active: vec![(0, 0), (1, 0), (2, 0), (0, 1), (3, 1), (2, 1)],
        u0: vec![0.0, 0.1],
        default_horizon: 25.0,
        default_points: 205,
        nonneg_states: false,
    })
    .expect("FitzHugh-Nagumo model is well formed")
}

/// du1 = w1 u2 + w2 u1³ + w3 u1² + w4 u3, du2 = w5 + w6 u1² + w7 u2,
/// du3 = w8 u1 + w9 + w10 u3.
fn hindmarsh_rose() -> ModelSpec {
    // features: 1, u1, u1^2, u1^3, u2, u3
    let mut w = DMatrix::zeros(6, 3);
    w[(4, 0)] = 10.0;
    w[(3, 0)] = -10.0;
    w[(2, 0)] = 30.0;
    w[(5, 0)] = -10.0;
    w[(0, 1)] = 10.0;
    w[(2, 1)] = -50.0;
    w[(4, 1)] = -10.0;
    w[(1, 2)] = 0.04;
    w[(0, 2)] = 0.0319;
    w[(5, 2)] = -0.01;
    ModelSpec::new(ModelParts {
        name: "hindmarsh_rose".into(),
        state_dim: 3,
        feature_names: names(&["1", "u1", "u1^2", "u1^3", "u2", "u3"]),
        features: Arc::new(|u, out| {
            out[0] = 1.0;
            out[1] = u[0];
            out[2] = u[0] * u[0];
            out[3] = u[0] * u[0] * u[0];
            out[4] = u[1];
            out[5] = u[2];
        }),
        gradients: Arc::new(|u, out| {
            out.fill(0.0);
            out[3] = 1.0; // d u1 / d u1
            out[2 * 3] = 2.0 * u[0];
            out[3 * 3] = 3.0 * u[0] * u[0];
            out[4 * 3 + 1] = 1.0;
            out[5 * 3 + 2] = 1.0;
        }),
        true_params: w,
        active: vec![(4, 0), (3, 0), (2, 0), (5, 0), (0, 1), (2, 1), (4, 1), (1, 2), (0, 2), (5, 2)],
        u0: vec![-1.31, -7.6, -0.2],
        default_horizon: 10.0,
        default_points: 205,
        nonneg_states: false,
    })
    .expect("Hindmarsh-Rose model is well formed")
}

/// Protein transduction benchmark with a Michaelis-Menten feature u5/(0.3+u5).
fn ptb() -> ModelSpec {
    // features: u1, u1 u3, u4, u5/(Km + u5)
    let mut w = DMatrix::zeros(4, 5);
    w[(0, 0)] = -0.07;
    w[(1, 0)] = -0.6;
    w[(2, 0)] = 0.35;
    w[(0, 1)] = 0.07;
    w[(1, 2)] = -0.6;
    w[(2, 2)] = 0.05;
    w[(3, 2)] = 0.17;
    w[(1, 3)] = 0.6;
    w[(2, 3)] = -0.35;
    w[(2, 4)] = 0.3;
    w[(3, 4)] = -0.017;
    ModelSpec::new(ModelParts {
        name: "ptb".into(),
        state_dim: 5,
        feature_names: names(&["u1", "u1*u3", "u4", "u5/(0.3+u5)"]),
        features: Arc::new(|u, out| {
            out[0] = u[0];
            out[1] = u[0] * u[2];
            out[2] = u[3];
            out[3] = u[4] / (PTB_MICHAELIS + u[4]);
        }),
        gradients: Arc::new(|u, out| {
            out.fill(0.0);
            out[0] = 1.0;
            out[5] = u[2];
            out[5 + 2] = u[0];
            out[10 + 3] = 1.0;
            let den = PTB_MICHAELIS + u[4];
            out[15 + 4] = PTB_MICHAELIS / (den * den);
        }),
        true_params: w,
        active: vec![(0, 0), (1, 0), (2, 0), (0, 1), (1, 2), (2, 2), (3, 2), (1, 3), (2, 3), (2, 4), (3, 4)],
        u0: vec![1.0, 0.0, 1.0, 0.0, 1.0],
        default_horizon: 25.0,
        default_points: 205,
        nonneg_states: true,
    })
    .expect("PTB model is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn logistic_benchmark_matches_caption() {
        let m = get_benchmark("logistic").unwrap();
        assert_eq!((m.state_dim(), m.feature_count()), (1, 2));
        assert_eq!(m.true_active(), vec![1.0, -1.0]);
        assert_eq!(m.u0(), &[0.01]);
        assert_eq!(m.default_points(), 103);
    }

    #[test]
    fn lotka_volterra_benchmark_matches_caption() {
        let m = get_benchmark("lotka_volterra").unwrap();
        assert_eq!(m.true_active(), vec![3.0, -1.0, -6.0, 1.0]);
        assert_eq!(m.u0(), &[1.0, 1.0]);
        assert_eq!(m.default_points(), 205);
    }

    #[test]
    fn remaining_benchmarks_match_captions() {
        let fhn = get_benchmark("fhn").unwrap();
        assert_eq!(fhn.true_active(), vec![3.0, -3.0, 3.0, -1.0 / 3.0, 17.0 / 150.0, 1.0 / 15.0]);
        assert_eq!(fhn.u0(), &[0.0, 0.1]);
        let hmr = get_benchmark("hindmarsh_rose").unwrap();
        assert_eq!(hmr.true_active(), vec![10.0, -10.0, 30.0, -10.0, 10.0, -50.0, -10.0, 0.04, 0.0319, -0.01]);
        assert_eq!(hmr.u0(), &[-1.31, -7.6, -0.2]);
        let ptb = get_benchmark("ptb").unwrap();
        assert_eq!(ptb.true_active(), vec![-0.07, -0.6, 0.35, 0.07, -0.6, 0.05, 0.17, 0.6, -0.35, 0.3, -0.017]);
        assert_eq!(ptb.u0(), &[1.0, 0.0, 1.0, 0.0, 1.0]);
        // fourth equation: combined terms leave exactly two free parameters
        assert_eq!(ptb.active_features_of(3).len(), 2);
    }

    #[test]
    fn unknown_model_lists_valid_names() {
        let err = get_benchmark("lorenz").unwrap_err();
        assert!(matches!(err, WendyError::UnknownModel { .. }));
        assert!(err.to_string().contains("hindmarsh_rose"));
    }

    #[test]
    fn logistic_features_on_small_grid() {
        let m = get_benchmark("logistic").unwrap();
        let u = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]);
        let theta = m.eval_features(&u).unwrap();
        assert_eq!(theta, DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 4.0]));
    }

    #[test]
    fn fhn_and_ptb_feature_values() {
        let fhn = get_benchmark("fhn").unwrap();
        assert_eq!(fhn.features(&[1.0, 0.0]), vec![1.0, 1.0, 0.0, 1.0]);
        let ptb = get_benchmark("ptb").unwrap();
        assert_abs_diff_eq!(ptb.features(&[0.0, 0.0, 0.0, 0.0, 0.3])[3], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ptb_pole_is_reported() {
        let ptb = get_benchmark("ptb").unwrap();
        let u = DMatrix::from_row_slice(2, 5, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, -0.3]);
        assert_eq!(ptb.eval_features(&u).unwrap_err(), WendyError::FeatureEvaluation { row: 1, feature: 3 });
    }

    #[test]
    fn rhs_examples() {
        let m = get_benchmark("logistic").unwrap();
        let w = m.true_params().clone();
        assert_abs_diff_eq!(m.rhs(&[0.5], &w).unwrap()[0], 0.25, epsilon = 1e-15);
        assert_eq!(m.rhs(&[1.0], &w).unwrap()[0], 0.0);
        let lv = get_benchmark("lv").unwrap();
        assert_eq!(lv.rhs(&[1.0, 1.0], lv.true_params()).unwrap(), vec![2.0, -5.0]);
    }

    #[test]
    fn rhs_rejects_wrong_dimensions() {
        let lv = get_benchmark("lv").unwrap();
        assert!(matches!(lv.rhs(&[1.0], lv.true_params()), Err(WendyError::Dimension(_))));
        let w = DMatrix::zeros(2, 2);
        assert!(matches!(lv.rhs(&[1.0, 1.0], &w), Err(WendyError::Dimension(_))));
    }

    #[test]
    fn active_round_trip() {
        for b in Benchmark::ALL {
            let m = b.spec();
            let w = m.matrix_from_active(&m.true_active()).unwrap();
            assert_eq!(&w, m.true_params(), "{b}");
        }
    }
}

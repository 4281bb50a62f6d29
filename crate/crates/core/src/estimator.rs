//! Weak-form parameter estimation by iteratively reweighted least squares.
//!
//! The pipeline is: OLS on the weak system, then generalized least squares
//! iterations in which the residual covariance is recomputed from the current
//! parameters, then a pooled measurement-variance estimate from a high-order
//! difference filter, and finally the sandwich parameter covariance
//! `S = σ̂² (GᵀG)⁻¹Gᵀ Ĉ G(GᵀG)⁻¹` on the stacked system.
//!
//! Stacked quantities use test-function-major row order: row `k·d + i` holds
//! test function `k` of equation `i`. With that ordering the residual
//! covariance is banded, because two test functions only interact when their
//! supports overlap.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, WendyError};
use crate::linalg::{lstsq, BandedSym};
use crate::models::ModelSpec;
use crate::simulate::StateGrid;
use crate::weakform::{
    assemble_weighted, build_basis, check_rank, quadrature_weights, weighted_basis, BasisConfig, RankReport,
    TestFunctionBasis, WeakSystem,
};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_RIDGE: f64 = 1e-10;
pub const DEFAULT_FILTER_ORDER: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub basis: BasisConfig,
    /// Relative change in the parameter vector that ends the IRLS loop.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative diagonal loading applied to the residual covariance.
    pub ridge: f64,
    /// Order of the finite-difference filter used for σ̂².
    pub filter_order: usize,
    pub ci_level: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            basis: BasisConfig::default(),
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            ridge: DEFAULT_RIDGE,
            filter_order: DEFAULT_FILTER_ORDER,
            ci_level: 0.95,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(WendyError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(WendyError::Config("max_iter must be at least 1".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(WendyError::Config(format!("ridge must be nonnegative, got {}", self.ridge)));
        }
        if self.filter_order == 0 {
            return Err(WendyError::Config("filter order must be at least 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(WendyError::Config(format!("ci level must lie in (0, 1), got {}", self.ci_level)));
        }
        Ok(())
    }
}

/// Which parameters are free: `(feature, state)` pairs in reporting order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    features: usize,
    states: usize,
    active: Vec<(usize, usize)>,
}

impl ParamLayout {
    pub fn new(features: usize, states: usize, active: Vec<(usize, usize)>) -> Self {
        ParamLayout { features, states, active }
    }

    /// Every entry of a J×d matrix, column by column.
    pub fn dense(features: usize, states: usize) -> Self {
        let active = (0..states).flat_map(|i| (0..features).map(move |j| (j, i))).collect();
        ParamLayout { features, states, active }
    }

    pub fn of(model: &ModelSpec) -> Self {
        ParamLayout::new(model.feature_count(), model.state_dim(), model.active().to_vec())
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn to_matrix(&self, values: &[f64]) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.features, self.states);
        for (&(j, i), &v) in self.active.iter().zip(values) {
            w[(j, i)] = v;
        }
        w
    }

    pub fn to_vec(&self, w: &DMatrix<f64>) -> Vec<f64> {
        self.active.iter().map(|&(j, i)| w[(j, i)]).collect()
    }

    fn features_of(&self, state: usize) -> Vec<usize> {
        self.active.iter().filter(|&&(_, i)| i == state).map(|&(j, _)| j).collect()
    }

    fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.active.iter().map(|&(j, _)| j).collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

/// Columns of G that some equation uses.
pub fn used_columns(sys: &WeakSystem, layout: &ParamLayout) -> DMatrix<f64> {
    let cols = layout.used_features();
    DMatrix::from_fn(sys.g.nrows(), cols.len(), |r, c| sys.g[(r, cols[c])])
}

/// Per-equation least squares `min ‖G w_i − b_i‖` over the active features of
/// each equation. Inactive entries of the returned J×d matrix are zero.
pub fn ols_solve(sys: &WeakSystem, layout: &ParamLayout) -> Result<DMatrix<f64>> {
    if sys.g.ncols() != layout.features || sys.b.ncols() != layout.states {
        return Err(WendyError::Dimension(format!(
            "weak system is {}×{} / {}×{}, layout expects J={} d={}",
            sys.g.nrows(),
            sys.g.ncols(),
            sys.b.nrows(),
            sys.b.ncols(),
            layout.features,
            layout.states
        )));
    }
    check_rank(&used_columns(sys, layout))?;
    let mut w = DMatrix::zeros(layout.features, layout.states);
    for i in 0..layout.states {
        let feats = layout.features_of(i);
        if feats.is_empty() {
            continue;
        }
        let gi = DMatrix::from_fn(sys.g.nrows(), feats.len(), |r, c| sys.g[(r, feats[c])]);
        let bi = DMatrix::from_column_slice(sys.b.nrows(), 1, sys.b.column(i).as_slice());
        let x = lstsq(&gi, &bi)?;
        for (c, &j) in feats.iter().enumerate() {
            w[(j, i)] = x[(c, 0)];
        }
    }
    Ok(w)
}

/// The vectorized system `vec(B) ≈ G_s w` restricted to free parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSystem {
    /// Kd×P.
    pub design: DMatrix<f64>,
    /// Kd×1.
    pub rhs: DMatrix<f64>,
    pub test_functions: usize,
    pub states: usize,
}

pub fn stack(sys: &WeakSystem, layout: &ParamLayout) -> StackedSystem {
    let (k, d) = (sys.g.nrows(), sys.b.ncols());
    let mut design = DMatrix::zeros(k * d, layout.len());
    for (p, &(j, i)) in layout.active.iter().enumerate() {
        for r in 0..k {
            design[(r * d + i, p)] = sys.g[(r, j)];
        }
    }
    let rhs = DMatrix::from_fn(k * d, 1, |row, _| sys.b[(row / d, row % d)]);
    StackedSystem { design, rhs, test_functions: k, states: d }
}

/// Covariance of the stacked weak residual under unit-variance i.i.d. noise,
/// stored banded in test-function-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCovariance {
    test_functions: usize,
    states: usize,
    band: BandedSym,
}

impl ResidualCovariance {
    pub fn identity(test_functions: usize, states: usize) -> Self {
        ResidualCovariance { test_functions, states, band: BandedSym::identity(test_functions * states) }
    }

    /// From a dense matrix in column-major `vec` order (row `i·K + k`).
    pub fn from_vec_order(test_functions: usize, states: usize, c: &DMatrix<f64>) -> Result<Self> {
        let n = test_functions * states;
        if c.shape() != (n, n) {
            return Err(WendyError::Dimension(format!("covariance is {:?}, expected ({n}, {n})", c.shape())));
        }
        let perm = |row: usize| (row % states) * test_functions + row / states;
        let interleaved = DMatrix::from_fn(n, n, |r, s| c[(perm(r), perm(s))]);
        Ok(ResidualCovariance { test_functions, states, band: BandedSym::from_dense(&interleaved)? })
    }

    pub fn band(&self) -> &BandedSym {
        &self.band
    }

    /// Dense Kd×Kd matrix in test-function-major order.
    pub fn to_dense(&self) -> DMatrix<f64> {
        self.band.to_dense()
    }

    /// Dense Kd×Kd matrix in column-major `vec(GW − B)` order.
    pub fn to_vec_order(&self) -> DMatrix<f64> {
        let (k, d) = (self.test_functions, self.states);
        let n = k * d;
        let inter = |row: usize| (row % k) * d + row / k;
        DMatrix::from_fn(n, n, |r, s| self.band.get(inter(r), inter(s)))
    }
}

/// Precomputed pieces shared by every fit on the same grid and basis.
#[derive(Debug, Clone)]
pub struct WeakProblem {
    pub basis: TestFunctionBasis,
    pub weights: DVector<f64>,
    phi_q: DMatrix<f64>,
    phi_dot_q: DMatrix<f64>,
    /// For each grid point, the inclusive range of test functions supported there.
    active_at: Vec<Option<(usize, usize)>>,
    bandwidth_blocks: usize,
}

impl WeakProblem {
    pub fn new(basis: TestFunctionBasis, weights: DVector<f64>) -> Result<Self> {
        let (phi_q, phi_dot_q) = weighted_basis(&basis, &weights)?;
        let points = weights.len();
        let mut active_at: Vec<Option<(usize, usize)>> = vec![None; points];
        let mut bandwidth_blocks = 0;
        for (k, &(lo, hi)) in basis.supports().iter().enumerate() {
            for slot in &mut active_at[lo..=hi] {
                *slot = Some(match *slot {
                    None => (k, k),
                    Some((a, b)) => (a.min(k), b.max(k)),
                });
            }
        }
        for &(a, b) in active_at.iter().flatten() {
            bandwidth_blocks = bandwidth_blocks.max(b - a);
        }
        Ok(WeakProblem { basis, weights, phi_q, phi_dot_q, active_at, bandwidth_blocks })
    }

    /// Builds the default basis for a grid.
    pub fn for_grid(grid: &StateGrid, cfg: &BasisConfig) -> Result<Self> {
        let (k, radius) = cfg.resolve(grid.points());
        let basis = build_basis(grid, k, radius, cfg.eta)?;
        let weights = quadrature_weights(grid.points(), grid.dt())?;
        WeakProblem::new(basis, weights)
    }

    pub fn test_functions(&self) -> usize {
        self.basis.len()
    }

    pub fn assemble(&self, model: &ModelSpec, data: &StateGrid) -> Result<WeakSystem> {
        let theta = model.eval_features(data.states())?;
        assemble_weighted(&self.phi_q, &self.phi_dot_q, &theta, data.states())
    }

    /// Linearized residual covariance `L Lᵀ` at parameters `w`, where
    /// `L = ∂ vec(GW − B) / ∂ vec(U)`, followed by relative ridge loading.
    pub fn residual_covariance(
        &self,
        model: &ModelSpec,
        data: &StateGrid,
        w: &DMatrix<f64>,
        ridge: f64,
    ) -> Result<ResidualCovariance> {
        let k_count = self.test_functions();
        let d = model.state_dim();
        if data.points() != self.weights.len() || data.state_dim() != d {
            return Err(WendyError::Dimension(format!(
                "data grid {:?} does not match the weak problem ({} points, {d} states)",
                data.states().shape(),
                self.weights.len()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(WendyError::Config("non-finite parameters in residual covariance".into()));
        }
        let bw = self.bandwidth_blocks * d + d - 1;
        let mut band = BandedSym::zeros(k_count * d, bw);
        let mut grad = vec![0.0; model.feature_count() * d];
        let mut jac = DMatrix::zeros(d, d);
        let mut u = vec![0.0; d];
        // M_k = a_k J + b_k I, so M_k M_k2ᵀ = a a2 JJᵀ + a b2 J + b a2 Jᵀ + b b2 I
        let mut jjt = vec![0.0; d * d];
        let mut j_flat = vec![0.0; d * d];
        let mut row_buf = vec![0.0; d];
        for (m, range) in self.active_at.iter().enumerate() {
            let Some((a, b)) = *range else { continue };
            for (l, ul) in u.iter_mut().enumerate() {
                *ul = data.states()[(m, l)];
            }
            model.state_jacobian_into(&u, w, &mut grad, &mut jac).map_err(|e| match e {
                WendyError::FeatureEvaluation { feature, .. } => WendyError::FeatureEvaluation { row: m, feature },
                other => other,
            })?;
            for i in 0..d {
                for i2 in 0..d {
                    j_flat[i * d + i2] = jac[(i, i2)];
                    jjt[i * d + i2] = (0..d).map(|l| jac[(i, l)] * jac[(i2, l)]).sum();
                }
            }
            for k in a..=b {
                let (ak, bk) = (self.phi_q[(k, m)], self.phi_dot_q[(k, m)]);
                for k2 in a..=k {
                    let (a2, b2) = (self.phi_q[(k2, m)], self.phi_dot_q[(k2, m)]);
                    let (c_jj, c_j, c_jt, c_i) = (ak * a2, ak * b2, bk * a2, bk * b2);
                    for i in 0..d {
                        let len = if k2 == k { i + 1 } else { d };
                        for (i2, slot) in row_buf[..len].iter_mut().enumerate() {
                            let mut v = c_jj * jjt[i * d + i2] + c_j * j_flat[i * d + i2] + c_jt * j_flat[i2 * d + i];
                            if i == i2 {
                                v += c_i;
                            }
                            *slot = v;
                        }
                        let span = band.row_span_mut(k * d + i, k2 * d, len);
                        for (dst, v) in span.iter_mut().zip(&row_buf[..len]) {
                            *dst += v;
                        }
                    }
                }
            }
        }
        if ridge > 0.0 {
            band.scale_diagonal(ridge);
        }
        Ok(ResidualCovariance { test_functions: k_count, states: d, band })
    }
}

/// How the IRLS weights are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMode {
    /// Linearized errors-in-variables covariance, recomputed every iteration.
    Linearized,
    /// Unit covariance; the iteration collapses to ordinary least squares.
    Identity,
}

#[derive(Debug, Clone)]
pub struct IrlsOutcome {
    pub w: DMatrix<f64>,
    pub estimates: Vec<f64>,
    /// Residual covariance at the returned parameters.
    pub covariance: ResidualCovariance,
    pub iterations: usize,
    pub converged: bool,
    /// The covariance could not be factorized and the previous iterate was kept.
    pub singular_covariance: bool,
}

/// Generalized least squares iterations
/// `w⁽ⁿ⁺¹⁾ = (G_sᵀ C⁽ⁿ⁾⁻¹ G_s)⁻¹ G_sᵀ C⁽ⁿ⁾⁻¹ vec(B)` starting from OLS, solved by
/// whitening with the band Cholesky factor of C⁽ⁿ⁾.
pub fn irls(
    model: &ModelSpec,
    data: &StateGrid,
    problem: &WeakProblem,
    sys: &WeakSystem,
    cfg: &EstimatorConfig,
    mode: CovarianceMode,
) -> Result<IrlsOutcome> {
    let layout = ParamLayout::of(model);
    let w0 = ols_solve(sys, &layout)?;
    irls_from(model, data, problem, sys, cfg, mode, &w0)
}

/// As [`irls`] but starting from a given parameter matrix.
pub fn irls_from(
    model: &ModelSpec,
    data: &StateGrid,
    problem: &WeakProblem,
    sys: &WeakSystem,
    cfg: &EstimatorConfig,
    mode: CovarianceMode,
    start: &DMatrix<f64>,
) -> Result<IrlsOutcome> {
    let layout = ParamLayout::of(model);
    let stacked = stack(sys, &layout);
    let covariance_at = |w: &DMatrix<f64>| -> Result<ResidualCovariance> {
        match mode {
            CovarianceMode::Linearized => problem.residual_covariance(model, data, w, cfg.ridge),
            CovarianceMode::Identity => Ok(ResidualCovariance::identity(stacked.test_functions, stacked.states)),
        }
    };

    let mut current = layout.to_vec(start);
    let mut covariance = covariance_at(start)?;
    let mut iterations = 0;
    let mut converged = false;
    let mut singular_covariance = false;
    while iterations < cfg.max_iter {
        let Some(chol) = covariance.band.cholesky() else {
            singular_covariance = true;
            break;
        };
        let mut x = stacked.design.clone();
        let mut y = stacked.rhs.clone();
        chol.solve_lower_in_place(&mut x);
        chol.solve_lower_in_place(&mut y);
        let next: Vec<f64> = lstsq(&x, &y)?.column(0).iter().copied().collect();
        iterations += 1;
        if next.iter().any(|v| !v.is_finite()) {
            singular_covariance = true;
            break;
        }
        let diff = next.iter().zip(&current).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = current.iter().map(|v| v * v).sum::<f64>().sqrt();
        let w_next = layout.to_matrix(&next);
        let next_cov = match covariance_at(&w_next) {
            Ok(c) => c,
            Err(_) => {
                singular_covariance = true;
                break;
            }
        };
        current = next;
        covariance = next_cov;
        if diff < cfg.tol * norm || (norm == 0.0 && diff == 0.0) {
            converged = true;
            break;
        }
    }
    Ok(IrlsOutcome {
        w: layout.to_matrix(&current),
        estimates: current,
        covariance,
        iterations,
        converged: converged && !singular_covariance,
        singular_covariance,
    })
}

/// Normalized `order`-th difference filter: `(−1)^j C(order, j) / √C(2·order, order)`.
pub fn difference_filter(order: usize) -> Vec<f64> {
    let mut c = vec![1.0f64; order + 1];
    for j in 1..=order {
        c[j] = c[j - 1] * (order + 1 - j) as f64 / j as f64;
    }
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    c.iter().enumerate().map(|(j, v)| if j % 2 == 0 { v / norm } else { -v / norm }).collect()
}

/// Pooled σ̂²: mean square of every state column convolved (valid mode) with
/// the unit-norm difference filter of the given order.
pub fn estimate_measurement_variance(data: &StateGrid, filter_order: usize) -> Result<f64> {
    let f = difference_filter(filter_order);
    let n = data.points();
    if n < f.len() {
        return Err(WendyError::GridTooShort { points: n, needed: f.len() });
    }
    let outputs = n - f.len() + 1;
    let mut total = 0.0;
    for col in data.states().column_iter() {
        for start in 0..outputs {
            let v: f64 = f.iter().zip(col.iter().skip(start)).map(|(a, b)| a * b).sum();
            total += v * v;
        }
    }
    Ok(total / (data.state_dim() * outputs) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterCovariance {
    pub s: DMatrix<f64>,
    pub ses: Vec<f64>,
    /// Some diagonal entry came out negative through roundoff and was clamped.
    pub clamped: bool,
}

/// `S = σ̂² A Ĉ Aᵀ` with `A = (G_sᵀG_s)⁻¹G_sᵀ`; `ses = √diag(S)`.
pub fn parameter_covariance(
    design: &DMatrix<f64>,
    cov: &ResidualCovariance,
    sigma2: f64,
) -> Result<ParameterCovariance> {
    if design.nrows() != cov.band.dim() {
        return Err(WendyError::Dimension(format!(
            "design has {} rows, covariance is {}×{}",
            design.nrows(),
            cov.band.dim(),
            cov.band.dim()
        )));
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let qt = qr.q().transpose();
    let a = r.solve_upper_triangular(&qt).ok_or_else(|| WendyError::RankDeficient {
        rank: 0,
        cols: design.ncols(),
        smallest: vec![0.0],
    })?;
    let cat = cov.band.mul(&a.transpose());
    let mut s = (&a * cat) * sigma2;
    s = (&s + s.transpose()) * 0.5;
    let mut clamped = false;
    let ses = (0..s.nrows())
        .map(|i| {
            let v = s[(i, i)];
            if v < 0.0 {
                clamped = true;
                0.0
            } else {
                v.sqrt()
            }
        })
        .collect();
    Ok(ParameterCovariance { s, ses, clamped })
}

/// Standard-normal quantile at `(1 + level) / 2`.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 * (1.0 + level))
}

/// Symmetric Wald intervals `w ± z·se`.
pub fn confidence_intervals(ws: &[f64], ses: &[f64], level: f64) -> Result<Vec<(f64, f64)>> {
    if ws.len() != ses.len() {
        return Err(WendyError::Dimension(format!("{} estimates, {} standard errors", ws.len(), ses.len())));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(WendyError::Config(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let z = normal_quantile(level);
    Ok(ws.iter().zip(ses).map(|(w, s)| (w - z * s, w + z * s)).collect())
}

/// Complete output of [`fit`].
#[derive(Debug, Clone)]
pub struct WendyFit {
    pub model: String,
    pub param_names: Vec<String>,
    pub w_hat: DMatrix<f64>,
    pub estimates: Vec<f64>,
    pub residual_covariance: ResidualCovariance,
    pub s: DMatrix<f64>,
    pub ses: Vec<f64>,
    pub sigma2_hat: f64,
    pub iterations: usize,
    pub converged: bool,
    pub singular_covariance: bool,
    pub clamped_variance: bool,
    pub rank: RankReport,
    pub ci_level: f64,
}

impl WendyFit {
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        self.intervals_at(self.ci_level)
    }

    pub fn intervals_at(&self, level: f64) -> Vec<(f64, f64)> {
        confidence_intervals(&self.estimates, &self.ses, level).expect("fit holds matching estimates and errors")
    }

    pub fn report(&self) -> FitReport {
        let params = self
            .param_names
            .iter()
            .zip(&self.estimates)
            .zip(&self.ses)
            .zip(self.intervals())
            .map(|(((name, &estimate), &se), (ci_lo, ci_hi))| ParamReport {
                name: name.clone(),
                estimate,
                se,
                ci_lo,
                ci_hi,
            })
            .collect();
        FitReport {
            model: self.model.clone(),
            params,
            sigma2_hat: self.sigma2_hat,
            iterations: self.iterations,
            converged: self.converged,
            condition_number: self.rank.condition_number,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// JSON fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub params: Vec<ParamReport>,
    pub sigma2_hat: f64,
    pub iterations: usize,
    pub converged: bool,
    pub condition_number: f64,
}

/// End-to-end estimate on one dataset.
pub fn fit(model: &ModelSpec, data: &StateGrid, cfg: &EstimatorConfig) -> Result<WendyFit> {
    cfg.validate()?;
    let problem = WeakProblem::for_grid(data, &cfg.basis)?;
    fit_with(model, data, &problem, cfg)
}

/// [`fit`] with a prebuilt basis, for repeated fits on one grid.
pub fn fit_with(model: &ModelSpec, data: &StateGrid, problem: &WeakProblem, cfg: &EstimatorConfig) -> Result<WendyFit> {
    let layout = ParamLayout::of(model);
    if problem.test_functions() < model.feature_count() {
        return Err(WendyError::Config(format!(
            "{} test functions for {} features",
            problem.test_functions(),
            model.feature_count()
        )));
    }
    let sys = problem.assemble(model, data)?;
    let rank = check_rank(&used_columns(&sys, &layout))?;
    let outcome = irls(model, data, problem, &sys, cfg, CovarianceMode::Linearized)?;
    let sigma2_hat = estimate_measurement_variance(data, cfg.filter_order)?;
    let stacked = stack(&sys, &layout);
    let pc = parameter_covariance(&stacked.design, &outcome.covariance, sigma2_hat)?;
    Ok(WendyFit {
        model: model.name().to_string(),
        param_names: model.param_names(),
        w_hat: outcome.w,
        estimates: outcome.estimates,
        residual_covariance: outcome.covariance,
        s: pc.s,
        ses: pc.ses,
        sigma2_hat,
        iterations: outcome.iterations,
        converged: outcome.converged,
        singular_covariance: outcome.singular_covariance,
        clamped_variance: pc.clamped,
        rank,
        ci_level: cfg.ci_level,
    })
}

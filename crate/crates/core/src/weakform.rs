//! Weak-form regression system.
//!
//! Multiplying `du/dt = Θ(u) W` by a compactly supported test function φ and
//! integrating by parts gives `−∫ φ̇ u dt = ∫ φ Θ(u) W dt`. Discretising with
//! the trapezoidal rule on K test functions yields `B ≈ G W` with
//! `G = Φ Q Θ(U)` and `B = −Φ̇ Q U`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WendyError};
use crate::simulate::StateGrid;

pub const DEFAULT_ETA: f64 = 9.0;

/// Trapezoid weights `(dt/2, dt, …, dt, dt/2)` for `points` grid points.
pub fn quadrature_weights(points: usize, dt: f64) -> Result<DVector<f64>> {
    if points < 3 || !(dt > 0.0) {
        return Err(WendyError::Config(format!("quadrature needs at least 3 points and dt > 0 (got {points}, {dt})")));
    }
    let mut q = DVector::from_element(points, dt);
    q[0] = 0.5 * dt;
    q[points - 1] = 0.5 * dt;
    Ok(q)
}

/// The diagonal quadrature matrix Q as a dense matrix.
pub fn quadrature_matrix(points: usize, dt: f64) -> Result<DMatrix<f64>> {
    Ok(DMatrix::from_diagonal(&quadrature_weights(points, dt)?))
}

/// Test-function settings. `None` picks the grid-dependent default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BasisConfig {
    /// Number of test functions K.
    pub test_functions: Option<usize>,
    /// Support half-width in grid steps.
    pub radius_mult: Option<usize>,
    /// Bump shape parameter η.
    pub eta: f64,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig { test_functions: None, radius_mult: None, eta: DEFAULT_ETA }
    }
}

impl BasisConfig {
    /// `(K, radius_mult)` for a grid with `points` samples.
    pub fn resolve(&self, points: usize) -> (usize, usize) {
        let radius = self.radius_mult.unwrap_or_else(|| default_radius_mult(points));
        let k = self.test_functions.unwrap_or_else(|| points.saturating_sub(2 * radius).max(1));
        (k, radius)
    }
}

/// `max(2, ⌊points / 16⌋)`.
pub fn default_radius_mult(points: usize) -> usize {
    (points / 16).max(2)
}

/// Bump functions `φ(t) = exp(−η s² / (1 − s²))`, `s = (t − c) / (m_t Δt)`,
/// scaled to unit maximum, and their exact derivatives on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctionBasis {
    centers: Vec<f64>,
    radius_mult: usize,
    eta: f64,
    dt: f64,
    phi: DMatrix<f64>,
    phi_dot: DMatrix<f64>,
    supports: Vec<(usize, usize)>,
}

impl TestFunctionBasis {
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn radius_mult(&self) -> usize {
        self.radius_mult
    }

    pub fn radius(&self) -> f64 {
        self.radius_mult as f64 * self.dt
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// K×(M+1) values φ_k(t_m).
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// K×(M+1) values φ̇_k(t_m).
    pub fn phi_dot(&self) -> &DMatrix<f64> {
        &self.phi_dot
    }

    /// Inclusive index range of grid points where φ_k is nonzero.
    pub fn support(&self, k: usize) -> (usize, usize) {
        self.supports[k]
    }

    pub fn supports(&self) -> &[(usize, usize)] {
        &self.supports
    }

    /// Multiplies every test function by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.phi *= factor;
        out.phi_dot *= factor;
        out
    }
}

/// Builds K bumps with half-width `radius_mult · Δt`, centers spread uniformly
/// over `[t0 + radius, T − radius]`.
pub fn build_basis(grid: &StateGrid, k: usize, radius_mult: usize, eta: f64) -> Result<TestFunctionBasis> {
    build_basis_on(grid.t0(), grid.dt(), grid.points(), k, radius_mult, eta)
}

pub fn build_basis_on(
    t0: f64,
    dt: f64,
    points: usize,
    k: usize,
    radius_mult: usize,
    eta: f64,
) -> Result<TestFunctionBasis> {
    if radius_mult < 2 {
        return Err(WendyError::Config(format!("radius_mult must be at least 2, got {radius_mult}")));
    }
    if k == 0 {
        return Err(WendyError::Config("need at least one test function".into()));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(WendyError::Config(format!("bump shape η must be positive, got {eta}")));
    }
    if points < 3 {
        return Err(WendyError::Config(format!("grid has only {points} points")));
    }
    let m = points - 1;
    if 2 * radius_mult > m {
        return Err(WendyError::Config(format!(
            "test-function support 2·{radius_mult} steps exceeds the {m}-step interval"
        )));
    }
    let radius = radius_mult as f64 * dt;
    let lo = t0 + radius;
    let hi = t0 + m as f64 * dt - radius;
    let centers: Vec<f64> = if k == 1 {
        vec![0.5 * (lo + hi)]
    } else {
        if 2 * radius_mult == m {
            return Err(WendyError::Config(format!("{k} test functions would share a single center at this radius")));
        }
        let step = (hi - lo) / (k - 1) as f64;
        (0..k).map(|i| lo + i as f64 * step).collect()
    };
    if centers.windows(2).any(|w| w[1] <= w[0]) {
        return Err(WendyError::Config(format!("{k} test function centers are not distinct")));
    }

    let mut phi = DMatrix::zeros(k, points);
    let mut phi_dot = DMatrix::zeros(k, points);
    let mut supports = Vec::with_capacity(k);
    for (row, &c) in centers.iter().enumerate() {
        let mut first = None;
        let mut last = 0;
        for col in 0..points {
            let s = (t0 + col as f64 * dt - c) / radius;
            if s.abs() >= 1.0 {
                continue;
            }
            let one_minus = 1.0 - s * s;
            let value = (-eta * s * s / one_minus).exp();
            if value == 0.0 {
                continue;
            }
            phi[(row, col)] = value;
            phi_dot[(row, col)] = value * (-2.0 * eta * s / (one_minus * one_minus)) / radius;
            first.get_or_insert(col);
            last = col;
        }
        let first =
            first.ok_or_else(|| WendyError::Config(format!("test function {row} has no support on the grid")))?;
        supports.push((first, last));
    }
    Ok(TestFunctionBasis { centers, radius_mult, eta, dt, phi, phi_dot, supports })
}

/// Weak-form regression pair.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakSystem {
    /// K×J, `Φ Q Θ(U)`.
    pub g: DMatrix<f64>,
    /// K×d, `−Φ̇ Q U`.
    pub b: DMatrix<f64>,
}

/// `Φ Q` and `Φ̇ Q` with the diagonal of Q applied column-wise.
pub fn weighted_basis(basis: &TestFunctionBasis, weights: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if weights.len() != basis.phi.ncols() {
        return Err(WendyError::Dimension(format!(
            "{} quadrature weights for {} grid points",
            weights.len(),
            basis.phi.ncols()
        )));
    }
    let mut pq = basis.phi.clone();
    let mut pdq = basis.phi_dot.clone();
    for (c, &w) in weights.iter().enumerate() {
        pq.column_mut(c).scale_mut(w);
        pdq.column_mut(c).scale_mut(w);
    }
    Ok((pq, pdq))
}

pub fn assemble(
    basis: &TestFunctionBasis,
    weights: &DVector<f64>,
    theta: &DMatrix<f64>,
    states: &DMatrix<f64>,
) -> Result<WeakSystem> {
    let (pq, pdq) = weighted_basis(basis, weights)?;
    assemble_weighted(&pq, &pdq, theta, states)
}

pub(crate) fn assemble_weighted(
    pq: &DMatrix<f64>,
    pdq: &DMatrix<f64>,
    theta: &DMatrix<f64>,
    states: &DMatrix<f64>,
) -> Result<WeakSystem> {
    if theta.nrows() != pq.ncols() || states.nrows() != pq.ncols() {
        return Err(WendyError::Dimension(format!(
            "basis spans {} grid points but Θ has {} rows and U has {}",
            pq.ncols(),
            theta.nrows(),
            states.nrows()
        )));
    }
    Ok(WeakSystem { g: pq * theta, b: -(pdq * states) })
}

/// Singular-value summary of a design matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    /// Descending.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub tolerance: f64,
    pub condition_number: f64,
}

/// Rank at tolerance `max(rows, cols) · ε · σ_max`; errors when not full column rank.
pub fn check_rank(g: &DMatrix<f64>) -> Result<RankReport> {
    let report = rank_report(g);
    if report.rank < g.ncols() {
        let tail = report.singular_values.len().saturating_sub(2);
        return Err(WendyError::RankDeficient {
            rank: report.rank,
            cols: g.ncols(),
            smallest: report.singular_values[tail..].to_vec(),
        });
    }
    Ok(report)
}

pub fn rank_report(g: &DMatrix<f64>) -> RankReport {
    let mut sv: Vec<f64> = g.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let smax = sv.first().copied().unwrap_or(0.0);
    let tolerance = g.nrows().max(g.ncols()) as f64 * f64::EPSILON * smax;
    let rank = sv.iter().filter(|&&s| s > tolerance).count();
    let smin = sv.last().copied().unwrap_or(0.0);
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    RankReport { singular_values: sv, rank, tolerance, condition_number }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn trapezoid_weights() {
        let q = quadrature_weights(3, 0.1).unwrap();
        assert_eq!(q.as_slice(), &[0.05, 0.1, 0.05]);
        let q = quadrature_weights(11, 0.1).unwrap();
        assert_abs_diff_eq!(q.sum(), 1.0, epsilon = 1e-14);
        let f = DVector::from_fn(11, |m, _| m as f64 * 0.1);
        assert_abs_diff_eq!(q.dot(&f), 0.5, epsilon = 1e-15);
        let qm = quadrature_matrix(4, 0.5).unwrap();
        assert_eq!(qm, qm.transpose());
        assert!(quadrature_weights(2, 0.1).is_err());
    }

    #[test]
    fn bump_values_at_center_and_edges() {
        // center lands exactly on grid point 10
        let b = build_basis_on(0.0, 0.1, 21, 1, 5, DEFAULT_ETA).unwrap();
        assert_abs_diff_eq!(b.centers()[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.phi()[(0, 10)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.phi_dot()[(0, 10)], 0.0, epsilon = 1e-9);
        assert_eq!(b.phi()[(0, 5)], 0.0);
        assert_eq!(b.phi()[(0, 15)], 0.0);
        assert!(b.phi()[(0, 6)] > 0.0 && b.phi()[(0, 14)] > 0.0);
        assert_eq!(b.support(0), (6, 14));
    }

    #[test]
    fn bumps_vanish_at_interval_ends() {
        let b = build_basis_on(0.0, 0.05, 101, 60, 8, DEFAULT_ETA).unwrap();
        for k in 0..b.len() {
            assert_eq!(b.phi()[(k, 0)], 0.0);
            assert_eq!(b.phi()[(k, 100)], 0.0);
        }
    }

    #[test]
    fn derivative_is_analytic() {
        let b = build_basis_on(0.0, 1e-3, 2001, 1, 1000, 4.0).unwrap();
        // central difference on the fine grid approximates φ̇
        for col in [700usize, 900, 1100, 1400] {
            let fd = (b.phi()[(0, col + 1)] - b.phi()[(0, col - 1)]) / 2e-3;
            assert_abs_diff_eq!(fd, b.phi_dot()[(0, col)], epsilon = 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn default_basis_places_one_center_per_interior_point() {
        let cfg = BasisConfig::default();
        assert_eq!(cfg.resolve(103), (91, 6));
        assert_eq!(cfg.resolve(20), (16, 2));
        let b = build_basis_on(0.0, 0.1, 103, 91, 6, DEFAULT_ETA).unwrap();
        for (k, &c) in b.centers().iter().enumerate() {
            assert_abs_diff_eq!(c, (6 + k) as f64 * 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn bad_basis_configs() {
        assert!(build_basis_on(0.0, 0.1, 11, 3, 6, DEFAULT_ETA).is_err());
        assert!(build_basis_on(0.0, 0.1, 11, 3, 5, DEFAULT_ETA).is_err());
        assert!(build_basis_on(0.0, 0.1, 11, 1, 5, DEFAULT_ETA).is_ok());
        assert!(build_basis_on(0.0, 0.1, 11, 3, 1, DEFAULT_ETA).is_err());
        assert!(build_basis_on(0.0, 0.1, 11, 0, 2, DEFAULT_ETA).is_err());
    }

    #[test]
    fn derivative_rows_integrate_to_zero() {
        let b = build_basis_on(0.0, 0.05, 201, 150, 20, DEFAULT_ETA).unwrap();
        let q = quadrature_weights(201, 0.05).unwrap();
        let sums = b.phi_dot() * &q;
        let scale = b.phi_dot().abs().max() * 0.05;
        assert!(sums.iter().all(|s| s.abs() < 1e-10 * scale * 201.0), "{}", sums.amax());
    }

    #[test]
    fn single_function_with_unit_features_integrates_phi() {
        let b = build_basis_on(0.0, 0.1, 31, 1, 10, DEFAULT_ETA).unwrap();
        let q = quadrature_weights(31, 0.1).unwrap();
        let theta = DMatrix::from_element(31, 1, 1.0);
        let u = DMatrix::from_element(31, 1, 2.5);
        let sys = assemble(&b, &q, &theta, &u).unwrap();
        assert_abs_diff_eq!(sys.g[(0, 0)], (b.phi() * &q)[0], epsilon = 1e-15);
        assert!(sys.b[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn rank_examples() {
        let r = check_rank(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(r.rank, 2);
        assert_abs_diff_eq!(r.condition_number, 1.0, epsilon = 1e-14);
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        match check_rank(&g) {
            Err(WendyError::RankDeficient { rank, cols, .. }) => assert_eq!((rank, cols), (1, 2)),
            other => panic!("{other:?}"),
        }
    }
}

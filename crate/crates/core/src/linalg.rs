//! Dense and banded helpers used by the estimator.

use nalgebra::DMatrix;

use crate::error::{Result, WendyError};

/// Least-squares solution of `a x ≈ b` via thin Householder QR.
/// `a` must have full column rank.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(WendyError::Dimension(format!("lstsq: {} rows vs {} rows", a.nrows(), b.nrows())));
    }
    if a.nrows() < a.ncols() {
        return Err(WendyError::Dimension(format!("lstsq: underdetermined system ({}×{})", a.nrows(), a.ncols())));
    }
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    qr.r().solve_upper_triangular(&qtb).ok_or_else(|| WendyError::RankDeficient {
        rank: 0,
        cols: a.ncols(),
        smallest: vec![0.0],
    })
}

/// Symmetric matrix stored as its lower band: entry `(i, j)` with
/// `0 ≤ i − j ≤ bw` lives at `data[i·(bw+1) + bw − (i − j)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        BandedSym { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = BandedSym::zeros(n, 0);
        m.data.fill(1.0);
        m
    }

    /// Packs a symmetric dense matrix, choosing the smallest bandwidth that
    /// holds every nonzero of its lower triangle.
    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(WendyError::Dimension(format!("banded matrix must be square, got {:?}", a.shape())));
        }
        let n = a.nrows();
        let mut bw = 0;
        for j in 0..n {
            for i in j..n {
                if a[(i, j)] != 0.0 {
                    bw = bw.max(i - j);
                }
            }
        }
        let mut out = BandedSym::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                *out.entry_mut(i, j) = a[(i, j)];
            }
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + self.bw - (i - j)
    }

    /// Lower-triangle entry `(i, j)`, `j ≤ i ≤ j + bw`.
    #[inline]
    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let k = self.idx(i, j);
        &mut self.data[k]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[self.idx(i, i)]).collect()
    }

    /// Multiplies the diagonal by `1 + lambda`.
    pub fn scale_diagonal(&mut self, lambda: f64) {
        for i in 0..self.n {
            *self.entry_mut(i, i) *= 1.0 + lambda;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// `self · x`.
    pub fn mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.n, "banded product dimension");
        let mut y = DMatrix::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            for i in 0..self.n {
                let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
                let j0 = i.saturating_sub(self.bw);
                let off = self.bw - (i - j0);
                let mut acc = 0.0;
                for (j, &a) in (j0..=i).zip(&row[off..]) {
                    acc += a * xc[j];
                    if j < i {
                        y[(j, c)] += a * xc[i];
                    }
                }
                y[(i, c)] += acc;
            }
        }
        y
    }

    /// Contiguous lower-band entries `(i, j0..j0 + len)`; requires `j0 + len ≤ i + 1`.
    #[inline]
    pub(crate) fn row_span_mut(&mut self, i: usize, j0: usize, len: usize) -> &mut [f64] {
        let start = self.idx(i, j0);
        &mut self.data[start..start + len]
    }

    /// Band Cholesky `A = L Lᵀ`; `None` when a pivot is not strictly positive.
    pub fn cholesky(&self) -> Option<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = self.data.clone();
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let row_i = i * w + bw - (i - j0);
            for j in j0..=i {
                // L[i,j] = (A[i,j] − Σ_{k<j} L[i,k] L[j,k]) / L[j,j]; both spans are contiguous
                let len = j - j0;
                let row_j = j * w + bw - (j - j0);
                let s = l[row_i + len] - dot(&l[row_i..row_i + len], &l[row_j..row_j + len]);
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[row_i + len] = s / l[j * w + bw];
                }
            }
        }
        Some(BandedCholesky { n, bw, data: l })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators keep the loop vectorizable
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for t in 0..4 {
            acc[t] += a[4 * c + t] * b[4 * c + t];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for t in 4 * chunks..a.len() {
        s += a[t] * b[t];
    }
    s
}

/// Lower-triangular band factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    /// Overwrites `b` with `L⁻¹ b`.
    pub fn solve_lower_in_place(&self, b: &mut DMatrix<f64>) {
        assert_eq!(b.nrows(), self.n, "banded solve dimension");
        let w = self.bw + 1;
        for c in 0..b.ncols() {
            let n = self.n;
            let col = &mut b.as_mut_slice()[c * n..(c + 1) * n];
            for i in 0..self.n {
                let j0 = i.saturating_sub(self.bw);
                let row = i * w + self.bw - (i - j0);
                let s = col[i] - dot(&self.data[row..row + (i - j0)], &col[j0..i]);
                col[i] = s / self.data[i * w + self.bw];
            }
        }
    }

    /// `L` as a dense matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let w = self.bw + 1;
        DMatrix::from_fn(self.n, self.n, |i, j| {
            if j > i || i - j > self.bw {
                0.0
            } else {
                self.data[i * w + self.bw - (i - j)]
            }
        })
    }
}

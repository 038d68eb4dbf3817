//! Small dense containers used throughout the solvers.

use crate::error::{Error, Result};

/// A vector in `R^{n d}` partitioned into `n` blocks of length `d`.
///
/// Block `i` is the local copy held by agent `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedVector {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl StackedVector {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            data: vec![0.0; n * d],
        }
    }

    pub fn from_vec(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: data.len(),
            });
        }
        Ok(Self { n, d, data })
    }

    /// Every block set to `v`.
    pub fn replicate(n: usize, v: &[f64]) -> Self {
        let d = v.len();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend_from_slice(v);
        }
        Self { n, d, data }
    }

    pub fn blocks(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn iter_blocks(&self) -> std::slice::Chunks<'_, f64> {
        self.data.chunks(self.d.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n == other.n && self.d == other.d
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Block average `(1/n) Σ_i x_i`, accumulated in agent order.
    pub fn block_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        for b in self.iter_blocks() {
            axpy(1.0, b, &mut mean);
        }
        let inv = 1.0 / self.n as f64;
        mean.iter_mut().for_each(|v| *v *= inv);
        mean
    }

    /// Largest block-wise deviation from the block mean, in max-norm.
    pub fn consensus_spread(&self) -> f64 {
        let mean = self.block_mean();
        self.iter_blocks()
            .flat_map(|b| b.iter().zip(&mean).map(|(a, m)| (a - m).abs()))
            .fold(0.0, f64::max)
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `out = A x`
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o = dot(row, x);
        }
    }

    /// `out += alpha * A^T y`
    pub fn matvec_t_acc(&self, alpha: f64, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (yr, row) in y.iter().zip(self.data.chunks_exact(self.cols.max(1))) {
            axpy(alpha * yr, row, out);
        }
    }

    /// Stack matrices with equal column counts vertically.
    pub fn vstack(blocks: &[DenseMatrix]) -> Result<Self> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for b in blocks {
            if b.cols != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: b.cols,
                });
            }
            data.extend_from_slice(&b.data);
            rows += b.rows;
        }
        Ok(Self { rows, cols, data })
    }

    /// Largest eigenvalue of `A^T A`, i.e. `‖A‖₂²`.
    ///
    /// Power iteration runs on whichever Gram matrix is smaller. The returned
    /// value is inflated by a relative `1e-9` so it can serve as a Lipschitz
    /// upper bound.
    pub fn gram_spectral_norm(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        let k = self.rows.min(self.cols);
        let mut gram = vec![0.0; k * k];
        if self.rows <= self.cols {
            for i in 0..k {
                for j in i..k {
                    let v = dot(self.row(i), self.row(j));
                    gram[i * k + j] = v;
                    gram[j * k + i] = v;
                }
            }
        } else {
            for r in 0..self.rows {
                let row = self.row(r);
                for i in 0..k {
                    let ri = row[i];
                    if ri == 0.0 {
                        continue;
                    }
                    for j in 0..k {
                        gram[i * k + j] += ri * row[j];
                    }
                }
            }
        }
        symmetric_power_iteration(&gram, k) * (1.0 + 1e-9)
    }
}

/// Dominant eigenvalue of a symmetric positive semidefinite `k×k` matrix.
fn symmetric_power_iteration(m: &[f64], k: usize) -> f64 {
    // deterministic, non-degenerate start
    let mut v: Vec<f64> = (0..k).map(|i| 1.0 + 0.01 * (i as f64 + 1.0).sin()).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut mv = vec![0.0; k];
    let mut lambda = 0.0;
    for _ in 0..50_000 {
        for (i, out) in mv.iter_mut().enumerate() {
            *out = dot(&m[i * k..(i + 1) * k], &v);
        }
        let next = dot(&v, &mv);
        let nm = norm(&mv);
        if nm == 0.0 {
            return 0.0;
        }
        for (a, b) in v.iter_mut().zip(&mv) {
            *a = b / nm;
        }
        if (next - lambda).abs() <= 1e-15 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // the Rayleigh quotient approaches from below; ‖Mv‖ ≥ it for unit v
    let mut mv2 = vec![0.0; k];
    for (i, out) in mv2.iter_mut().enumerate() {
        *out = dot(&m[i * k..(i + 1) * k], &v);
    }
    lambda.max(norm(&mv2))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four accumulators let the compiler vectorize without reassociation
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

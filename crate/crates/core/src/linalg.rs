//! Dense row-major matrices and the handful of vector kernels the solvers need.
//!
//! Solution-space norms are Euclidean. Data-space norms are RMS norms
//! `(n⁻¹ Σ vᵢ²)^½`, which realize the `n^{-1/2}` stacking of the equations
//! without ever storing scaled rows.

use crate::error::{Error, Result};

/// Dense real matrix stored row by row, so that `row(i)` is contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Aᵀ y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, yi) in y.iter().enumerate() {
            axpy(*yi, self.row(i), &mut out);
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, aik) in self.row(i).iter().enumerate() {
                axpy(*aik, other.row(k), dst);
            }
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> Result<f64> {
        Ok(Svd::new(self)?.sigma.first().copied().unwrap_or(0.0))
    }
}

/// Thin singular value decomposition `A = Σ_j σ_j u_j v_jᵀ` with `σ` nonincreasing.
#[derive(Clone, Debug)]
pub struct Svd {
    pub sigma: Vec<f64>,
    /// Left singular vectors `u_j` (the data-space basis).
    pub left: Vec<Vec<f64>>,
    /// Right singular vectors `v_j` (the solution-space basis).
    pub right: Vec<Vec<f64>>,
}

impl Svd {
    pub fn new(a: &Matrix) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::NonFinite("matrix passed to the SVD"));
        }
        let m = faer::Mat::<f64>::from_fn(a.rows, a.cols, |i, j| a.get(i, j));
        let svd = m.thin_svd().map_err(|e| Error::Svd(format!("{e:?}")))?;
        let s = svd.S().column_vector();
        let u = svd.U();
        let v = svd.V();
        let k = s.nrows();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&p, &q| s[q].total_cmp(&s[p]));
        let sigma = order.iter().map(|&j| s[j]).collect();
        let left = order.iter().map(|&j| (0..a.rows).map(|i| u[(i, j)]).collect()).collect();
        let right = order.iter().map(|&j| (0..a.cols).map(|i| v[(i, j)]).collect()).collect();
        Ok(Self { sigma, left, right })
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// `Σ_{j<rank} σ_j u_j v_jᵀ`.
    pub fn reconstruct(&self, rank: usize, rows: usize, cols: usize) -> Matrix {
        let mut out = Matrix::zeros(rows, cols);
        for j in 0..rank.min(self.len()) {
            let (s, u, v) = (self.sigma[j], &self.left[j], &self.right[j]);
            for i in 0..rows {
                let c = s * u[i];
                if c != 0.0 {
                    axpy(c, v, &mut out.data[i * cols..(i + 1) * cols]);
                }
            }
        }
        out
    }
}

/// Inner product with four independent accumulators so the loop vectorizes.
/// The summation order is fixed, so results are reproducible.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    norm2_sq(v).sqrt()
}

/// Squared RMS norm `n⁻¹ Σ vᵢ²` (data space).
pub fn rms_sq(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    norm2_sq(v) / v.len() as f64
}

/// RMS norm `(n⁻¹ Σ vᵢ²)^½` (data space).
pub fn rms(v: &[f64]) -> f64 {
    rms_sq(v).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Squared Euclidean distance `‖a − b‖²`.
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_of_diagonal_is_sorted() {
        let a = Matrix::diag(&[1.0, 3.0, 2.0]);
        let svd = Svd::new(&a).unwrap();
        assert_eq!(svd.len(), 3);
        for (s, e) in svd.sigma.iter().zip([3.0, 2.0, 1.0]) {
            assert!((s - e).abs() < 1e-14);
        }
        let back = svd.reconstruct(3, 3, 3);
        assert!(back.sub(&a).max_abs() < 1e-14);
    }

    #[test]
    fn svd_rejects_nan() {
        let mut a = Matrix::identity(2);
        a.set(0, 1, f64::NAN);
        assert!(matches!(Svd::new(&a), Err(Error::NonFinite(_))));
    }

    #[test]
    fn transpose_products_agree() {
        let a = Matrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64 + 1.0);
        let y = [1.0, -1.0, 2.0];
        assert_eq!(a.tr_mul_vec(&y), a.transpose().mul_vec(&y));
        let ata = a.transpose().matmul(&a);
        assert_eq!(ata.get(0, 1), ata.get(1, 0));
    }

    #[test]
    fn rms_norm_scales_by_length() {
        assert_eq!(rms(&[3.0, 4.0]), (12.5f64).sqrt());
        assert_eq!(rms(&[]), 0.0);
    }
}

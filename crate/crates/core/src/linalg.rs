//! Small dense square matrices and lower-triangular scale factors.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: data.len() });
        }
        Ok(Matrix { dim, data })
    }

    /// Builds a matrix from rows; every row must have `rows.len()` entries.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Replaces the matrix with (A + Aᵀ)/2.
    pub fn symmetrize(&mut self) {
        let n = self.dim;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, v);
                self.set(j, i, v);
            }
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                worst = worst.max(libm::fabs(self.get(i, j) - self.get(j, i)));
            }
        }
        worst
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }
}

/// Lower-triangular factor `L` with strictly positive diagonal; `Σ = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular(Matrix);

impl LowerTriangular {
    pub fn identity(dim: usize) -> Self {
        LowerTriangular(Matrix::identity(dim))
    }

    /// Validates a lower-triangular factor. Entries above the diagonal must be zero.
    pub fn new(m: Matrix) -> Result<Self> {
        let n = m.dim();
        if n == 0 {
            return Err(Error::EmptyDimension);
        }
        for i in 0..n {
            for j in 0..n {
                let v = m.get(i, j);
                if !v.is_finite() {
                    return Err(Error::NonFinite { what: "scale factor entry" });
                }
                if j > i && v != 0.0 {
                    return Err(Error::NotLowerTriangular { row: i, col: j });
                }
            }
            let d = m.get(i, i);
            if d <= 0.0 {
                return Err(Error::NonPositiveDiagonal { index: i, value: d });
            }
        }
        Ok(LowerTriangular(m))
    }

    /// Builds `L` from ragged rows (row `i` has `i + 1` entries) or full square rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut m = Matrix::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != i + 1 && row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: row.len() });
            }
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Self::new(m)
    }

    /// Cholesky factorization of a dense symmetric positive-definite `Σ`.
    pub fn cholesky(sigma: &Matrix) -> Result<Self> {
        let n = sigma.dim();
        if n == 0 {
            return Err(Error::EmptyDimension);
        }
        let scale = sigma.as_slice().iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v)));
        if sigma.max_asymmetry() > 1e-12 * scale.max(1.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let mut l = Matrix::zeros(n);
        for j in 0..n {
            let mut d = sigma.get(j, j);
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let ljj = libm::sqrt(d);
            l.set(j, j, ljj);
            for i in (j + 1)..n {
                let mut v = sigma.get(i, j);
                for k in 0..j {
                    v -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, v / ljj);
            }
        }
        Ok(LowerTriangular(l))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    /// out = L·z
    pub fn mul_vec(&self, z: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.0.row(i);
            let mut acc = 0.0;
            for k in 0..=i {
                acc += row[k] * z[k];
            }
            out[i] = acc;
        }
    }

    /// Solves L·z = v by forward substitution.
    pub fn solve(&self, v: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.0.row(i);
            let mut acc = v[i];
            for k in 0..i {
                acc -= row[k] * out[k];
            }
            out[i] = acc / row[i];
        }
    }

    /// log |Σ| = 2 Σᵢ log Lᵢᵢ
    pub fn log_det_sigma(&self) -> f64 {
        (0..self.dim()).map(|i| 2.0 * libm::log(self.0.get(i, i))).sum()
    }

    /// Σ = L·Lᵀ
    pub fn sigma(&self) -> Matrix {
        let n = self.dim();
        let mut s = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut acc = 0.0;
                for k in 0..=j {
                    acc += self.0.get(i, k) * self.0.get(j, k);
                }
                s.set(i, j, acc);
                s.set(j, i, acc);
            }
        }
        s
    }

    pub fn is_identity(&self) -> bool {
        self.0 == Matrix::identity(self.dim())
    }

    /// Rows as full square vectors.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.0.row(i).to_vec()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_round_trip() {
        let sigma = Matrix::from_rows(&[[4.0, 1.2, 0.4], [1.2, 2.0, -0.3], [0.4, -0.3, 1.5]]).unwrap();
        let l = LowerTriangular::cholesky(&sigma).unwrap();
        let back = l.sigma();
        for i in 0..3 {
            for j in 0..3 {
                assert!((back.get(i, j) - sigma.get(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let sigma = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert_eq!(LowerTriangular::cholesky(&sigma), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn rejects_non_positive_diagonal() {
        let err = LowerTriangular::from_rows(&[vec![1.0], vec![0.5, 0.0]]).unwrap_err();
        assert_eq!(err, Error::NonPositiveDiagonal { index: 1, value: 0.0 });
    }

    #[test]
    fn solve_inverts_mul() {
        let l = LowerTriangular::from_rows(&[vec![2.0], vec![0.3, 0.7]]).unwrap();
        let z = [0.4, -1.1];
        let mut x = [0.0; 2];
        l.mul_vec(&z, &mut x);
        let mut back = [0.0; 2];
        l.solve(&x, &mut back);
        assert!((back[0] - z[0]).abs() < 1e-15 && (back[1] - z[1]).abs() < 1e-15);
    }
}

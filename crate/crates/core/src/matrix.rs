//! Dense column-major matrix storage.
//!
//! Every solver in this crate works on a single contiguous buffer in
//! column-major order: entry `(i, j)` of an `m x n` matrix lives at
//! `j * m + i`. Row-major data is transposed on ingestion.

use std::fmt;

use crate::error::OtError;
use crate::real::Real;

/// Dense `rows x cols` matrix, column-major.
#[derive(Clone, PartialEq)]
pub struct Matrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows, self.cols)?;
        let mut list = f.debug_list();
        for i in 0..self.rows {
            let row: Vec<&T> = (0..self.cols).map(|j| &self.data[j * self.rows + i]).collect();
            list.entry(&row);
        }
        list.finish()
    }
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    /// Builds a matrix by evaluating `f(i, j)` in storage order.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Wraps an existing column-major buffer.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, OtError> {
        if data.len() != rows * cols {
            return Err(OtError::ShapeMismatch {
                expected: (rows, cols),
                found: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Transposes a row-major buffer into column-major storage.
    pub fn from_row_major(rows: usize, cols: usize, data: &[T]) -> Result<Self, OtError> {
        if data.len() != rows * cols {
            return Err(OtError::ShapeMismatch {
                expected: (rows, cols),
                found: (data.len(), 1),
            });
        }
        Ok(Self::from_fn(rows, cols, |i, j| data[i * cols + j]))
    }

    /// Builds a matrix from a slice of equally long rows.
    ///
    /// Panics on ragged input; intended for literals and tests.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.as_ref().len());
        assert!(rows.iter().all(|r| r.as_ref().len() == n), "ragged rows");
        Self::from_fn(m, n, |i, j| rows[i].as_ref()[j])
    }

    /// The rank-one product `p q^T`.
    pub fn outer(p: &[T], q: &[T]) -> Self {
        Self::from_fn(p.len(), q.len(), |i, j| p[i] * q[j])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[j * self.rows + i] = value;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Converts every entry to another floating type.
    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// `X e`, accumulated column by column.
    pub fn row_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows];
        for j in 0..self.cols {
            for (acc, &v) in out.iter_mut().zip(self.col(j)) {
                *acc = *acc + v;
            }
        }
        out
    }

    /// `X^T f`.
    pub fn col_sums(&self) -> Vec<T> {
        (0..self.cols)
            .map(|j| self.col(j).iter().fold(T::zero(), |acc, &v| acc + v))
            .collect()
    }

    /// Frobenius inner product, summed in storage order.
    pub fn dot(&self, other: &Self) -> T {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Self) -> T {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
            .sqrt()
    }

    /// Largest entrywise `|self - other|`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: T, other: &Self, b: T) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&x, &y)| a * x + b * y).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_shape(&self, rows: usize, cols: usize) -> Result<(), OtError> {
        if self.shape() != (rows, cols) {
            return Err(OtError::ShapeMismatch {
                expected: (rows, cols),
                found: self.shape(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn storage_is_column_major() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(a.as_slice(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(a.get(1, 2), 6.0);
        assert_eq!(a.col(1), &[2.0, 5.0]);
    }

    #[test]
    fn row_major_ingestion_transposes() {
        let a = Matrix::from_row_major(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(a, Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]));
        assert!(Matrix::<f64>::from_row_major(2, 2, &[1.0]).is_err());
    }

    #[test]
    fn sums_and_norms() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(a.row_sums(), vec![3.0, 7.0]);
        assert_eq!(a.col_sums(), vec![4.0, 6.0]);
        assert_eq!(a.dot(&a), 30.0);
        assert!((a.frobenius_norm() - 30f64.sqrt()).abs() < 1e-15);
    }
}

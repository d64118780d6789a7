//! Dense row-major matrices and the norms used by the loss terms.
//!
//! Everything is `f64` and every reduction accumulates left to right, so a
//! given build produces bit-identical results run to run.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{DualError, Result};

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(DualError::contract(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for
    /// literals in tests and examples.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Copies the given columns, in order, into a new matrix.
    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, idx.len(), |i, j| self[(i, idx[j])])
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &Matrix, s: f64) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        self.check_same_shape(other)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Sets every diagonal entry to zero (square or not).
    pub fn zero_diagonal(&mut self) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] = 0.0;
        }
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)].abs())
            .fold(0.0, f64::max)
    }

    /// Sum of each row, as a vector of length `rows`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    fn check_same_shape(&self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(DualError::contract(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Standard matrix product. Each output entry accumulates over the inner
/// dimension in ascending order.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(DualError::contract(format!(
            "matmul: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Sum of squared entries.
pub fn frobenius_sq(a: &Matrix) -> f64 {
    a.data.iter().map(|v| v * v).sum()
}

/// Euclidean norm of every row.
pub fn row_l2_norms(a: &Matrix) -> Vec<f64> {
    (0..a.rows)
        .map(|i| a.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Sum of the row norms.
pub fn l21_norm(a: &Matrix) -> f64 {
    row_l2_norms(a).iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matmul_examples() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(matmul(&Matrix::identity(2), &a).unwrap(), a);

        let b = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        assert_eq!(matmul(&Matrix::zeros(2, 3), &b).unwrap(), Matrix::zeros(2, 4));

        let ones = Matrix::from_rows(&[[1.0], [1.0]]);
        assert_eq!(
            matmul(&a, &ones).unwrap(),
            Matrix::from_rows(&[[3.0], [7.0]])
        );
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, DualError::Contract(_)));
    }

    #[test]
    fn norm_examples() {
        assert_eq!(frobenius_sq(&Matrix::zeros(3, 3)), 0.0);
        assert_eq!(frobenius_sq(&Matrix::identity(3)), 3.0);
        assert_eq!(frobenius_sq(&Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]])), 30.0);

        assert_eq!(l21_norm(&Matrix::zeros(2, 2)), 0.0);
        assert_eq!(l21_norm(&Matrix::from_rows(&[[3.0, 4.0], [0.0, 0.0]])), 5.0);
        assert_eq!(l21_norm(&Matrix::identity(2)), 2.0);

        assert_eq!(row_l2_norms(&Matrix::zeros(2, 2)), vec![0.0, 0.0]);
        assert_eq!(
            row_l2_norms(&Matrix::from_rows(&[[3.0, 4.0], [5.0, 12.0]])),
            vec![5.0, 13.0]
        );
        assert_eq!(row_l2_norms(&Matrix::identity(3)), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_diagonal_and_transpose() {
        let mut m = Matrix::from_fn(3, 3, |i, j| (i + j + 1) as f64);
        m.zero_diagonal();
        assert_eq!(m.max_abs_diagonal(), 0.0);
        let t = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).transpose();
        assert_eq!(t.shape(), (3, 1));
        assert_eq!(t.column(0), vec![1.0, 2.0, 3.0]);
    }

    fn small_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-10.0f64..10.0, rows * cols)
            .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
    }

    proptest! {
        #[test]
        fn l21_is_sum_of_row_norms(a in small_matrix(5, 4)) {
            let total: f64 = row_l2_norms(&a).iter().sum();
            let l21 = l21_norm(&a);
            prop_assert!((l21 - total).abs() <= 1e-12 * total.abs().max(1e-300));
        }

        #[test]
        fn frobenius_nonnegative_zero_iff_zero(a in small_matrix(3, 3)) {
            let f = frobenius_sq(&a);
            prop_assert!(f >= 0.0);
            prop_assert_eq!(f == 0.0, a.as_slice().iter().all(|&v| v == 0.0));
        }

        #[test]
        fn matmul_associative(a in small_matrix(3, 4), b in small_matrix(4, 2), c in small_matrix(2, 3)) {
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let scale = frobenius_sq(&left).sqrt().max(1.0);
            for (x, y) in left.as_slice().iter().zip(right.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-9 * scale);
            }
        }
    }
}

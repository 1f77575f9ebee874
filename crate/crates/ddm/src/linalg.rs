//! Dense matrix kernels for the small linear systems the pricing models produce.
//!
//! State spaces here are tiny (a handful of growth states, at most a few
//! thousand joint states), so a row-major `Vec<f64>` with partial-pivot
//! Gaussian elimination covers every need without pulling in a linear
//! algebra dependency.

use crate::error::{DdmError, Result};

/// Pivots with magnitude below this are treated as zero and the system as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-14;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
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
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from row slices. All rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(DdmError::DimensionMismatch(
                "matrix needs at least one row".into(),
            ));
        }
        let cols = rows[0].len();
        if cols == 0 {
            return Err(DdmError::DimensionMismatch(
                "matrix needs at least one column".into(),
            ));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(DdmError::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
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

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Matrix-vector product. The vector length must match the column count.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "vector length must match column count");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, x)| a * x).sum())
            .collect()
    }
}

/// Solves `a * x = b` by Gaussian elimination with partial pivoting.
///
/// The input matrix must be square with `b` of matching length (checked by
/// assertion; callers construct these systems themselves). Returns
/// `SingularMatrix` when the best available pivot falls below
/// [`PIVOT_TOLERANCE`].
pub fn solve_linear_system(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(a.rows(), a.cols(), "coefficient matrix must be square");
    assert_eq!(b.len(), a.rows(), "right-hand side length must match");
    let n = a.rows();
    let mut work = a.clone();
    let mut rhs = b.to_vec();

    for col in 0..n {
        // Pick the largest remaining pivot in this column.
        let mut pivot_row = col;
        let mut pivot_abs = work.get(col, col).abs();
        for row in col + 1..n {
            let cand = work.get(row, col).abs();
            if cand > pivot_abs {
                pivot_abs = cand;
                pivot_row = row;
            }
        }
        if pivot_abs < PIVOT_TOLERANCE {
            return Err(DdmError::SingularMatrix {
                step: col,
                pivot: pivot_abs,
            });
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = work.get(col, j);
                work.set(col, j, work.get(pivot_row, j));
                work.set(pivot_row, j, tmp);
            }
            rhs.swap(col, pivot_row);
        }
        let pivot = work.get(col, col);
        for row in col + 1..n {
            let factor = work.get(row, col) / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                let updated = work.get(row, j) - factor * work.get(col, j);
                work.set(row, j, updated);
            }
            rhs[row] -= factor * rhs[col];
        }
    }

    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        for j in i + 1..n {
            acc -= work.get(i, j) * x[j];
        }
        x[i] = acc / work.get(i, i);
    }
    Ok(x)
}

/// Applies `a` to `v` a total of `n` times, i.e. computes `a^n * v` without
/// ever forming the matrix power.
pub fn matrix_power_apply(a: &Matrix, v: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(a.rows(), a.cols(), "matrix must be square");
    assert_eq!(v.len(), a.cols(), "vector length must match");
    let mut out = v.to_vec();
    for _ in 0..n {
        out = a.mul_vec(&out);
    }
    out
}

/// Neumaier-compensated summation. Order-sensitive like any float sum, so
/// callers that need reproducibility must feed a fixed iteration order.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            compensation += (sum - t) + x;
        } else {
            compensation += (x - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

/// Largest absolute residual entry of `a * x - b`.
pub fn max_residual(a: &Matrix, x: &[f64], b: &[f64]) -> f64 {
    a.mul_vec(x)
        .iter()
        .zip(b)
        .map(|(lhs, rhs)| (lhs - rhs).abs())
        .fold(0.0, f64::max)
}

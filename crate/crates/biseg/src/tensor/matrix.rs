//! Dense 2-D matrix with row-major storage.
//!
//! The universal numeric carrier of the pipeline: point features, similarity
//! matrices, parameters and their gradients are all `Matrix` values in f64.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dense row-major f64 matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zeros matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Constant-filled matrix.
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Build from row-major data; length must equal `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                op: "from_vec",
                detail: format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Build from explicit rows (test/fixture convenience).
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Dimension {
                    op: "from_rows",
                    detail: format!("row {i} has {} entries, expected {c}", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
    }

    /// Uniform random matrix in `[lo, hi)` drawn from `rng`.
    pub fn random<R: Rng>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn ensure_finite(self, op: &'static str) -> Result<Self> {
        if self.all_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite { op })
        }
    }

    /// Standard matrix product.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension {
                op: "matmul",
                detail: format!("{}x{} * {}x{}", self.rows, self.cols, other.rows, other.cols),
            });
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = Matrix::zeros(n, m);
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out.data[i * m..(i + 1) * m];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += a * b;
                }
            }
        }
        out.ensure_finite("matmul")
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Softmax applied to each row, with max-subtraction for stability.
    pub fn row_softmax(&self) -> Result<Matrix> {
        if !self.all_finite() {
            return Err(Error::NonFinite { op: "row_softmax" });
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            let row = out.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        out.ensure_finite("row_softmax")
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn concat_cols(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Dimension {
                op: "concat_cols",
                detail: format!("{} rows vs {} rows", self.rows, other.rows),
            });
        }
        let cols = self.cols + other.cols;
        let mut out = Matrix::zeros(self.rows, cols);
        for r in 0..self.rows {
            out.data[r * cols..r * cols + self.cols].copy_from_slice(self.row(r));
            out.data[r * cols + self.cols..(r + 1) * cols].copy_from_slice(other.row(r));
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul_elem(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "mul_elem", |a, b| a * b)
    }

    fn zip_with(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                op,
                detail: format!("{:?} vs {:?}", self.shape(), other.shape()),
            });
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Matrix::from_vec(self.rows, self.cols, data)?.ensure_finite(op)
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        let data = self.data.iter().map(|v| v * factor).collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Sum of all entries.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Reorder rows so output row `i` is input row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Matrix> {
        if perm.len() != self.rows {
            return Err(Error::Dimension {
                op: "permute_rows",
                detail: format!("permutation length {} vs {} rows", perm.len(), self.rows),
            });
        }
        let mut out = Matrix::zeros(self.rows, self.cols);
        for (i, &src) in perm.iter().enumerate() {
            if src >= self.rows {
                return Err(Error::Bounds {
                    index: src,
                    len: self.rows,
                });
            }
            out.row_mut(i).copy_from_slice(self.row(src));
        }
        Ok(out)
    }

    /// Largest absolute entry difference against another matrix of the same shape.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Canonical point ordering: indices sorted lexicographically by the
/// concatenated rows of `keys`. Reductions performed in this order are
/// independent of the caller's row order, which is what makes the attention
/// pipeline bit-exactly permutation-equivariant. Bit-identical rows are
/// interchangeable, so their relative order is immaterial.
pub fn canonical_row_order(keys: &[&Matrix]) -> Vec<usize> {
    let n = keys.first().map_or(0, |k| k.rows());
    debug_assert!(keys.iter().all(|k| k.rows() == n));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        for key in keys {
            for (va, vb) in key.row(a).iter().zip(key.row(b).iter()) {
                match va.total_cmp(vb) {
                    std::cmp::Ordering::Equal => continue,
                    other => return other,
                }
            }
        }
        std::cmp::Ordering::Equal
    });
    order
}

/// Inverse of a permutation: `inverse[perm[i]] == i`.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

//! Triplet sparse matrices stored in row-major (CSR) order.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{check_len, LcqpError, Result};

/// A sparse matrix with entries kept sorted by `(row, col)`.
///
/// Explicit zeros are dropped on construction, so `entries()` is exactly the
/// nonzero pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
    row_ptr: Vec<usize>,
    symmetric: bool,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_sorted(rows, cols, Vec::new(), false)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_sorted(n, n, (0..n).map(|i| (i, i, 1.0)).collect(), true)
    }

    /// Builds a matrix from triplets in any order. Rejects duplicates,
    /// out-of-range indices and non-finite values.
    pub fn from_triplets(rows: usize, cols: usize, triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, j, v) in triplets {
            if i >= rows || j >= cols {
                return Err(LcqpError::Dimension(format!(
                    "entry ({i}, {j}) outside {rows}x{cols}"
                )));
            }
            if !v.is_finite() {
                return Err(LcqpError::Invalid(format!("non-finite entry at ({i}, {j})")));
            }
            if map.insert((i, j), v).is_some() {
                return Err(LcqpError::Invalid(format!("duplicate entry ({i}, {j})")));
            }
        }
        let entries = map
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((i, j), v)| (i, j, v))
            .collect();
        Ok(Self::from_sorted(rows, cols, entries, false))
    }

    /// Like [`from_triplets`](Self::from_triplets) but also checks and records
    /// symmetry.
    pub fn symmetric_from_triplets(n: usize, triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut m = Self::from_triplets(n, n, triplets)?;
        if !m.check_symmetric() {
            return Err(LcqpError::Invalid("matrix is not symmetric".into()));
        }
        m.symmetric = true;
        Ok(m)
    }

    /// Dense conversion dropping exact zeros.
    pub fn from_dense(d: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                let v = d[(i, j)];
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        let mut m = Self::from_sorted(d.nrows(), d.ncols(), entries, false);
        if m.rows == m.cols && m.check_symmetric() {
            m.symmetric = true;
        }
        m
    }

    fn from_sorted(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>, symmetric: bool) -> Self {
        let mut row_ptr = vec![0; rows + 1];
        for &(i, _, _) in &entries {
            row_ptr[i + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { rows, cols, entries, row_ptr, symmetric }
    }

    fn check_symmetric(&self) -> bool {
        self.rows == self.cols
            && self.entries.iter().all(|&(i, j, v)| self.get(j, i) == v)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Entries of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, usize, f64)] {
        &self.entries[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = self.row(i);
        match row.binary_search_by_key(&j, |&(_, c, _)| c) {
            Ok(k) => row[k].2,
            Err(_) => 0.0,
        }
    }

    /// `y = M x`, summing each row in column order.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("matrix-vector operand", x.len(), self.cols)?;
        Ok((0..self.rows)
            .map(|i| {
                let mut acc = 0.0;
                for &(_, j, v) in self.row(i) {
                    acc += v * x[j];
                }
                acc
            })
            .collect())
    }

    /// `y = Mᵀ x`, accumulating contributions in row order.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("transposed matrix-vector operand", x.len(), self.rows)?;
        let mut y = vec![0.0; self.cols];
        for &(i, j, v) in &self.entries {
            y[j] += v * x[i];
        }
        Ok(y)
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.entries.iter().map(|&(i, j, v)| (j, i, v)).collect();
        let mut t = t;
        t.sort_by_key(|a| (a.0, a.1));
        Self::from_sorted(self.cols, self.rows, t, self.symmetric)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows, self.cols);
        for &(i, j, v) in &self.entries {
            d[(i, j)] = v;
        }
        d
    }

    /// Largest absolute entry of each row (0 for empty rows).
    pub fn row_abs_max(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().fold(0.0_f64, |m, e| m.max(e.2.abs())))
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt()
    }

    /// Applies `f` to every value; entries mapped to zero are dropped.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        let e = self
            .entries
            .iter()
            .map(|&(i, j, v)| (i, j, f(v)))
            .filter(|e| e.2 != 0.0)
            .collect();
        Self::from_sorted(self.rows, self.cols, e, self.symmetric)
    }
}

impl Serialize for SparseMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries.serialize(s)
    }
}

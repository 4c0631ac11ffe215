use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::DenseMatrix;
use crate::error::{Error, Result};

/// Compressed sparse row matrix.
///
/// Within each row the column indices are strictly increasing, so two
/// matrices with the same pattern can be compared entry by entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Validates and wraps raw CSR arrays.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != rows + 1 || row_ptr[0] != 0 {
            return Err(Error::dim("from_csr", "row_ptr must have rows + 1 entries starting at 0"));
        }
        if col_idx.len() != values.len() || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(Error::dim("from_csr", "row_ptr, col_idx and values disagree on nnz"));
        }
        for r in 0..rows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(Error::dim("from_csr", format!("row_ptr decreases at row {r}")));
            }
            let cols_r = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols_r.iter().any(|&c| c >= cols) {
                return Err(Error::dim("from_csr", format!("column index out of range in row {r}")));
            }
            if cols_r.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::dim(
                    "from_csr",
                    format!("column indices not strictly increasing in row {r}"),
                ));
            }
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= rows || c >= cols {
                return Err(Error::dim(
                    "from_triplets",
                    format!("entry ({r}, {c}) outside {rows}x{cols}"),
                ));
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
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
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn degree(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    /// Iterates stored entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// Same sparsity pattern, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.nnz() {
            return Err(Error::dim("with_values", "value count differs from nnz"));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    /// Divides each row by its sum; rows with zero sum stay zero.
    pub fn row_normalized(&self) -> Self {
        let mut values = self.values.clone();
        for r in 0..self.rows {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let total: f64 = values[span.clone()].iter().sum();
            if total != 0.0 {
                values[span].iter_mut().for_each(|v| *v /= total);
            }
        }
        Self {
            values,
            ..self.clone()
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols && self.iter().all(|(r, c, v)| (self.get(c, r) - v).abs() <= tol)
    }

    /// `self · dense`
    pub fn spmm(&self, dense: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != dense.rows() {
            return Err(Error::dim(
                "spmm",
                format!(
                    "{}x{} sparse times {}x{} dense",
                    self.rows,
                    self.cols,
                    dense.rows(),
                    dense.cols()
                ),
            ));
        }
        let m = dense.cols();
        let mut out = DenseMatrix::zeros(self.rows, m);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let o = out.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for (x, &y) in o.iter_mut().zip(dense.row(c)) {
                    *x += v * y;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · dense`, without materializing the transpose.
    pub fn t_spmm(&self, dense: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != dense.rows() {
            return Err(Error::dim(
                "t_spmm",
                format!(
                    "transpose of {}x{} sparse times {}x{} dense",
                    self.rows,
                    self.cols,
                    dense.rows(),
                    dense.cols()
                ),
            ));
        }
        let m = dense.cols();
        let mut out = DenseMatrix::zeros(self.cols, m);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let src = dense.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for (x, &y) in out.row_mut(c).iter_mut().zip(src) {
                    *x += v * y;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.iter() {
            out.set(r, c, v);
        }
        out
    }
}

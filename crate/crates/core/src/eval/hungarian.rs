use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Minimum-cost perfect matching on the zero-padded square cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    /// `mapping[row] = column` over the padded `size × size` problem.
    pub mapping: Vec<usize>,
    pub total_cost: f64,
    pub rows: usize,
    pub cols: usize,
}

impl AssignmentResult {
    /// Matched `(row, column)` pairs that lie inside the original matrix.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.mapping
            .iter()
            .enumerate()
            .filter(|&(r, &c)| r < self.rows && c < self.cols)
            .map(|(r, &c)| (r, c))
    }
}

/// Hungarian algorithm with row/column potentials, O(n³).
pub fn hungarian(cost: &DenseMatrix) -> Result<AssignmentResult> {
    let (rows, cols) = cost.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::contract("assignment over an empty cost matrix"));
    }
    if !cost.is_finite() {
        return Err(Error::Numeric { op: "hungarian" });
    }
    let n = rows.max(cols);
    let at = |i: usize, j: usize| if i < rows && j < cols { cost.get(i, j) } else { 0.0 };

    // 1-based potentials; column 0 is a virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut mapping = vec![0; n];
    for j in 1..=n {
        mapping[owner[j] - 1] = j - 1;
    }
    let total_cost = mapping.iter().enumerate().map(|(r, &c)| at(r, c)).sum();
    Ok(AssignmentResult {
        mapping,
        total_cost,
        rows,
        cols,
    })
}

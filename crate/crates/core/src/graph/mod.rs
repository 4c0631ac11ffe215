//! Graph container, adjacency normalization, homophily, node/class splits
//! and a stochastic block model generator.

mod sbm;
mod split;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

pub use sbm::{generate_sbm, SbmConfig};
pub use split::{make_class_folds, max_feasible_folds, open_world_split, ClassFoldPlan, OpenWorldSplit};

use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, SparseMatrix};

/// Undirected attributed graph with one class label per node.
///
/// The adjacency is stored symmetric, unweighted (all ones), without
/// self-loops or duplicate edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    features: DenseMatrix,
    adjacency: SparseMatrix,
    labels: Vec<usize>,
    num_classes: usize,
}

/// Fixed train/validation/test node masks. The union may leave nodes out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMasks {
    pub train: Vec<bool>,
    pub validation: Vec<bool>,
    pub test: Vec<bool>,
}

impl SplitMasks {
    pub fn new(train: Vec<bool>, validation: Vec<bool>, test: Vec<bool>) -> Result<Self> {
        if train.len() != validation.len() || train.len() != test.len() {
            return Err(Error::contract("split masks have different lengths"));
        }
        let overlap = (0..train.len())
            .find(|&i| (train[i] as u8 + validation[i] as u8 + test[i] as u8) > 1);
        if let Some(i) = overlap {
            return Err(Error::contract(format!("node {i} appears in more than one split")));
        }
        Ok(Self {
            train,
            validation,
            test,
        })
    }

    /// Masks built from node id lists.
    pub fn from_indices(n: usize, train: &[usize], validation: &[usize], test: &[usize]) -> Result<Self> {
        let to_mask = |ids: &[usize]| -> Result<Vec<bool>> {
            let mut m = vec![false; n];
            for &i in ids {
                if i >= n {
                    return Err(Error::contract(format!("mask node {i} out of range for {n} nodes")));
                }
                m[i] = true;
            }
            Ok(m)
        };
        Self::new(to_mask(train)?, to_mask(validation)?, to_mask(test)?)
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    pub fn train_nodes(&self) -> Vec<usize> {
        indices(&self.train)
    }

    pub fn validation_nodes(&self) -> Vec<usize> {
        indices(&self.validation)
    }

    pub fn test_nodes(&self) -> Vec<usize> {
        indices(&self.test)
    }
}

fn indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

impl Graph {
    /// Builds a graph from an undirected edge list. Edges are symmetrized,
    /// duplicates collapsed and self-loops dropped.
    pub fn new(
        features: DenseMatrix,
        edges: &[(usize, usize)],
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::contract(format!(
                "{} labels for {} feature rows",
                labels.len(),
                n
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::contract(format!(
                "label {y} of node {i} outside [0, {num_classes})"
            )));
        }
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::contract(format!("edge ({u}, {v}) references a missing node")));
            }
            if u != v {
                pairs.push((u, v));
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut row_ptr = vec![0usize; n + 1];
        for &(u, _) in &pairs {
            row_ptr[u + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = pairs.iter().map(|&(_, v)| v).collect();
        let adjacency = SparseMatrix::from_csr(n, n, row_ptr, col_idx, vec![1.0; pairs.len()])?;
        Ok(Self {
            features,
            adjacency,
            labels,
            num_classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .filter(|&(u, v, _)| u < v)
            .map(|(u, v, _)| (u, v))
            .collect()
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
    pub fn normalize_adjacency(&self) -> SparseMatrix {
        normalize_adjacency(&self.adjacency)
    }

    /// Class-insensitive edge homophily.
    pub fn homophily(&self) -> Result<f64> {
        homophily(&self.adjacency, &self.labels, self.num_classes)
    }
}

/// GCN renormalization of an unweighted symmetric adjacency.
pub fn normalize_adjacency(adj: &SparseMatrix) -> SparseMatrix {
    let n = adj.rows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / libm::sqrt(adj.row(i).1.iter().sum::<f64>() + 1.0))
        .collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(adj.nnz() + n);
    let mut values = Vec::with_capacity(adj.nnz() + n);
    row_ptr.push(0);
    for i in 0..n {
        let (cols, vals) = adj.row(i);
        let mut diag_done = false;
        for (&j, &a) in cols.iter().zip(vals) {
            if !diag_done && j > i {
                col_idx.push(i);
                values.push(inv_sqrt[i] * inv_sqrt[i]);
                diag_done = true;
            }
            if j == i {
                continue;
            }
            col_idx.push(j);
            values.push(a * inv_sqrt[i] * inv_sqrt[j]);
        }
        if !diag_done {
            col_idx.push(i);
            values.push(inv_sqrt[i] * inv_sqrt[i]);
        }
        row_ptr.push(col_idx.len());
    }
    SparseMatrix::from_csr(n, n, row_ptr, col_idx, values)
        .expect("normalized adjacency keeps a valid CSR layout")
}

/// Class-insensitive homophily:
/// `(1 / (C - 1)) * Σ_k max(0, h_k - |C_k| / n)`, where `h_k` is the share of
/// edge endpoints of class-`k` nodes whose other endpoint is also class `k`.
pub fn homophily(adj: &SparseMatrix, labels: &[usize], num_classes: usize) -> Result<f64> {
    if num_classes < 2 {
        return Err(Error::contract("homophily needs at least two classes"));
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::contract("homophily of an empty graph"));
    }
    let mut same = vec![0.0; num_classes];
    let mut total = vec![0.0; num_classes];
    let mut size = vec![0.0; num_classes];
    for &y in labels {
        size[y] += 1.0;
    }
    for (u, v, _) in adj.iter() {
        let k = labels[u];
        total[k] += 1.0;
        if labels[v] == k {
            same[k] += 1.0;
        }
    }
    let sum: f64 = (0..num_classes)
        .map(|k| {
            let h_k = if total[k] > 0.0 { same[k] / total[k] } else { 0.0 };
            (h_k - size[k] / n as f64).max(0.0)
        })
        .sum();
    Ok(sum / (num_classes - 1) as f64)
}

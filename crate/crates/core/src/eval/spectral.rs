use alloc::vec;
use alloc::vec::Vec;

use super::eigen::{symmetric_top_k, DENSE_LIMIT};
use super::kmeans::{kmeans, DEFAULT_MAX_ITERS};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{DenseMatrix, SparseMatrix};

/// Spectral clustering of the graph structure alone.
///
/// The `k` eigenvectors of `D^{-1/2} A D^{-1/2}` with the largest
/// eigenvalues (the bottom of the normalized Laplacian) are row-normalized
/// and clustered by k-means. Isolated nodes keep a zero row.
pub fn spectral_cluster(adjacency: &SparseMatrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = adjacency.rows();
    if n > DENSE_LIMIT {
        return Err(Error::Capability(alloc::format!(
            "spectral clustering keeps a dense {n}x{n} matrix; limit is {DENSE_LIMIT}"
        )));
    }
    if k == 0 || k > n {
        return Err(Error::contract(alloc::format!("cannot form {k} clusters of {n} nodes")));
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = adjacency.row(i).1.iter().sum();
            if d > 0.0 {
                1.0 / libm::sqrt(d)
            } else {
                0.0
            }
        })
        .collect();
    let mut m = DenseMatrix::zeros(n, n);
    for (i, j, a) in adjacency.iter() {
        if i != j {
            m.set(i, j, a * inv_sqrt[i] * inv_sqrt[j]);
        }
    }
    let (_, vectors) = symmetric_top_k(m, k, rng::derive(seed, 0x5eed))?;
    let (embedding, _) = vectors.row_l2_normalize();
    Ok(kmeans(&embedding, k, seed, DEFAULT_MAX_ITERS)?.labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cliques() -> SparseMatrix {
        let mut t = Vec::new();
        for base in [0, 4] {
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        t.push((base + i, base + j, 1.0));
                    }
                }
            }
        }
        SparseMatrix::from_triplets(8, 8, &t).unwrap()
    }

    #[test]
    fn recovers_components() {
        let labels = spectral_cluster(&cliques(), 2, 3).unwrap();
        assert!(labels[..4].iter().all(|&l| l == labels[0]));
        assert!(labels[4..].iter().all(|&l| l == labels[4]));
        assert_ne!(labels[0], labels[4]);
    }

    #[test]
    fn one_cluster() {
        assert_eq!(spectral_cluster(&cliques(), 1, 0).unwrap(), [0; 8]);
    }

    #[test]
    fn sparse_graph_with_isolated_nodes() {
        use rand::Rng;
        for seed in 0..2 {
            let mut r = crate::rng::seeded(seed);
            let n = 1700;
            let mut t = Vec::new();
            for _ in 0..3000 {
                let (u, v) = (r.random_range(0..n), r.random_range(0..n));
                if u != v {
                    t.push((u, v, 1.0));
                    t.push((v, u, 1.0));
                }
            }
            let a = SparseMatrix::from_triplets(n, n, &t).unwrap();
            let labels = spectral_cluster(&a, 7, seed).unwrap();
            assert!(labels.iter().all(|&l| l < 7));
        }
    }
}

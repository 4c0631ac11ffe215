//! Graph-convolution encoder, feature-shuffle corruption and mean summary.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{DenseMatrix, SparseMatrix, Tape, Var};

/// Weights of an `L`-layer GCN without biases.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub weights: Vec<DenseMatrix>,
    pub dropout: f64,
}

impl GcnParams {
    /// Embedding encoder: `d -> h -> ... -> h`.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        num_layers: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Self::with_output(input_dim, hidden_dim, hidden_dim, num_layers, dropout, rng)
    }

    /// `d -> h -> ... -> out`; used by the classification baseline.
    pub fn with_output<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        num_layers: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(2..=3).contains(&num_layers) {
            return Err(Error::contract(format!("encoder depth {num_layers} not in {{2, 3}}")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::contract(format!("dropout {dropout} outside [0, 1)")));
        }
        let mut weights = Vec::with_capacity(num_layers);
        for layer in 0..num_layers {
            let fan_in = if layer == 0 { input_dim } else { hidden_dim };
            let fan_out = if layer + 1 == num_layers { output_dim } else { hidden_dim };
            weights.push(glorot_uniform(fan_in, fan_out, rng));
        }
        Ok(Self { weights, dropout })
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map_or(0, DenseMatrix::cols)
    }

    /// Records the weights as parameter leaves.
    pub fn register(&self, tape: &mut Tape<'_>) -> Vec<Var> {
        self.weights.iter().map(|w| tape.param(w.clone())).collect()
    }

    /// Eval-mode embeddings (no dropout) outside any training tape.
    pub fn embed(&self, adj: &SparseMatrix, features: &DenseMatrix) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let weights: Vec<Var> = self.weights.iter().map(|w| tape.constant(w.clone())).collect();
        let x = tape.constant(features.clone());
        let z = encode(&mut tape, &weights, adj, x, self.dropout, None)?;
        Ok(tape.value(z).clone())
    }

    /// Eval-mode output of the final layer without normalization.
    pub fn logits(&self, adj: &SparseMatrix, features: &DenseMatrix) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let weights: Vec<Var> = self.weights.iter().map(|w| tape.constant(w.clone())).collect();
        let x = tape.constant(features.clone());
        let h = propagate_layers(&mut tape, &weights, adj, x, self.dropout, None)?;
        Ok(tape.value(h).clone())
    }
}

/// Glorot/Xavier uniform initialization.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> DenseMatrix {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let mut w = DenseMatrix::zeros(fan_in, fan_out);
    for v in w.data_mut() {
        *v = rng.random_range(-limit..limit);
    }
    w
}

/// `Â · relu(… Â · relu(Â X W₁) …) W_L` with dropout on every layer input
/// when `train_rng` is given.
pub fn propagate_layers<'a>(
    tape: &mut Tape<'a>,
    weights: &[Var],
    adj: &'a SparseMatrix,
    features: Var,
    dropout: f64,
    mut train_rng: Option<&mut rng::Rng>,
) -> Result<Var> {
    let (n, d) = tape.shape(features);
    if adj.rows() != n || adj.cols() != n {
        return Err(Error::dim(
            "encode",
            format!("{}x{} adjacency for {} nodes", adj.rows(), adj.cols(), n),
        ));
    }
    if weights.is_empty() || tape.shape(weights[0]).0 != d {
        return Err(Error::dim("encode", format!("first layer does not accept {d} features")));
    }
    let mut h = features;
    for (layer, &w) in weights.iter().enumerate() {
        if let Some(r) = train_rng.as_deref_mut() {
            if dropout > 0.0 {
                h = tape.dropout(h, dropout, r)?;
            }
        }
        let hw = tape.matmul(h, w)?;
        h = tape.spmm(adj, hw)?;
        if layer + 1 < weights.len() {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}

/// Node embeddings on the unit sphere.
pub fn encode<'a>(
    tape: &mut Tape<'a>,
    weights: &[Var],
    adj: &'a SparseMatrix,
    features: Var,
    dropout: f64,
    train_rng: Option<&mut rng::Rng>,
) -> Result<Var> {
    let h = propagate_layers(tape, weights, adj, features, dropout, train_rng)?;
    tape.row_l2_normalize(h)
}

/// Rows of `features` shuffled by a seeded uniform permutation.
pub fn corrupt(features: &DenseMatrix, seed: u64) -> DenseMatrix {
    corrupt_with(features, &mut rng::seeded(seed))
}

pub fn corrupt_with<R: Rng + ?Sized>(features: &DenseMatrix, rng: &mut R) -> DenseMatrix {
    let mut perm: Vec<usize> = (0..features.rows()).collect();
    perm.shuffle(rng);
    features.select_rows(&perm)
}

/// Column-wise mean of the embeddings.
pub fn summarize(z: &DenseMatrix) -> Result<DenseMatrix> {
    if z.rows() == 0 {
        return Err(Error::contract("summary of zero embeddings"));
    }
    Ok(z.col_mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn outputs_are_unit_norm() {
        let mut r = rng::seeded(1);
        let p = GcnParams::new(4, 8, 2, 0.0, &mut r).unwrap();
        let adj = SparseMatrix::from_triplets(3, 3, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let adj = crate::graph::normalize_adjacency(&adj);
        let x = DenseMatrix::from_rows(&[[1.0, 0.0, 2.0, -1.0], [0.5, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 3.0]])
            .unwrap();
        let z = p.embed(&adj, &x).unwrap();
        for row in z.row_iter() {
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn edgeless_graph_is_an_mlp() {
        let mut r = rng::seeded(2);
        let p = GcnParams::new(3, 5, 2, 0.0, &mut r).unwrap();
        let eye = SparseMatrix::identity(2);
        let x = DenseMatrix::from_rows(&[[1.0, -2.0, 0.5], [0.0, 1.0, 1.0]]).unwrap();
        let h = p.logits(&eye, &x).unwrap();
        let hidden = x.matmul(&p.weights[0]).unwrap().map(|v| v.max(0.0));
        let mlp = hidden.matmul(&p.weights[1]).unwrap();
        for (a, b) in h.data().iter().zip(mlp.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn depth_is_two_or_three() {
        let mut r = rng::seeded(0);
        assert!(GcnParams::new(3, 4, 1, 0.0, &mut r).is_err());
        assert!(GcnParams::new(3, 4, 4, 0.0, &mut r).is_err());
        let p = GcnParams::new(3, 4, 3, 0.0, &mut r).unwrap();
        assert_eq!(p.weights[1].shape(), (4, 4));
        assert_eq!(p.output_dim(), 4);
    }

    #[test]
    fn corruption_permutes_rows() {
        let x = DenseMatrix::from_rows(&[[1.0], [2.0], [3.0], [4.0], [5.0]]).unwrap();
        let c = corrupt(&x, 7);
        let mut vals = c.data().to_vec();
        vals.sort_by(f64::total_cmp);
        assert_eq!(vals, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(c, corrupt(&x, 7));
        let single = DenseMatrix::from_rows(&[[9.0, 8.0]]).unwrap();
        assert_eq!(corrupt(&single, 3), single);
    }

    #[test]
    fn summary_is_column_mean() {
        let z = DenseMatrix::from_rows(&[[0.6, 0.8], [-0.6, -0.8]]).unwrap();
        assert_eq!(summarize(&z).unwrap().data(), &[0.0, 0.0]);
        let same = DenseMatrix::from_rows(&[[0.6, 0.8], [0.6, 0.8]]).unwrap();
        assert_eq!(summarize(&same).unwrap().data(), &[0.6, 0.8]);
        assert!(summarize(&DenseMatrix::zeros(0, 2)).is_err());
    }
}

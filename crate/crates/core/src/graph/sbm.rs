use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Graph, SplitMasks};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::DenseMatrix;

/// Parameters of a planted-partition stochastic block model.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmConfig {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub seed: u64,
}

impl SbmConfig {
    pub fn new(num_nodes: usize, num_classes: usize, p_in: f64, p_out: f64) -> Self {
        Self {
            num_nodes,
            num_classes,
            p_in,
            p_out,
            feature_dim: 32,
            feature_noise: 1.0,
            seed: 0,
        }
    }

    pub fn with_features(mut self, dim: usize, noise: f64) -> Self {
        self.feature_dim = dim;
        self.feature_noise = noise;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

const TRAIN_PER_CLASS: usize = 20;
const VALIDATION_SIZE: usize = 500;
const TEST_SIZE: usize = 1000;

/// Balanced SBM with class-centroid features and Planetoid-style masks.
///
/// Node `i` belongs to class `i % num_classes`. Features are the one-hot
/// centroid of the class plus isotropic Gaussian noise. Masks take 20 train
/// nodes per class (half the class when it is smaller than 40), then up to
/// 500 validation nodes (at most half the remainder) and up to 1000 test
/// nodes from what is left.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<(Graph, SplitMasks)> {
    let SbmConfig {
        num_nodes: n,
        num_classes: c,
        p_in,
        p_out,
        feature_dim,
        feature_noise,
        seed,
    } = *cfg;
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_in < p_out {
        return Err(Error::contract(format!(
            "need 0 <= p_out <= p_in <= 1, got p_in = {p_in}, p_out = {p_out}"
        )));
    }
    if c < 2 || n < c {
        return Err(Error::contract(format!("{n} nodes cannot host {c} classes")));
    }
    if feature_dim < c {
        return Err(Error::contract(format!(
            "feature dimension {feature_dim} below the class count {c}"
        )));
    }
    if !(feature_noise >= 0.0) {
        return Err(Error::contract("feature noise must be non-negative"));
    }

    let mut r = rng::seeded(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if p > 0.0 && r.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut features = DenseMatrix::zeros(n, feature_dim);
    for (v, &y) in labels.iter().enumerate() {
        let row = features.row_mut(v);
        for x in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut r);
            *x = feature_noise * z;
        }
        row[y] += 1.0;
    }

    let mut train = Vec::new();
    let mut rest = Vec::new();
    for k in 0..c {
        let mut members: Vec<usize> = (0..n).filter(|&v| labels[v] == k).collect();
        members.shuffle(&mut r);
        let take = TRAIN_PER_CLASS.min(members.len() / 2).max(1);
        train.extend_from_slice(&members[..take]);
        rest.extend_from_slice(&members[take..]);
    }
    rest.sort_unstable();
    rest.shuffle(&mut r);
    let n_val = VALIDATION_SIZE.min(rest.len() / 2);
    let n_test = TEST_SIZE.min(rest.len() - n_val);
    let masks = SplitMasks::from_indices(n, &train, &rest[..n_val], &rest[n_val..n_val + n_test])?;

    let graph = Graph::new(features, &edges, labels, c)?;
    Ok((graph, masks))
}

//! Learnable class prototypes, soft membership, the prototype NLL loss and
//! the anti-collapse regularizer.
//!
//! Membership uses the cosine distance `d(z, p) = 1 - <z, p>` on unit
//! vectors: `p_i = softmax_i(-d(z, p_i) / τ)` over a prototype subset. The
//! constant `1/τ` shift cancels inside the softmax, so the logits recorded on
//! the tape are simply `<z, p_i> / τ`.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{dot, softmax_in_place, squared_distance, DenseMatrix, Tape, Var};

pub const DEFAULT_TAU_SUPERVISED: f64 = 0.1;
pub const DEFAULT_TAU_PSEUDO: f64 = 0.7;

/// Unit-norm prototype vectors. Rows `known_ids` stand for the labeled
/// classes (in the order of the split's known class list); `new_ids` are the
/// remaining rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub vectors: DenseMatrix,
    pub known_ids: Vec<usize>,
    pub new_ids: Vec<usize>,
    pub tau_supervised: f64,
    pub tau_pseudo: f64,
}

impl PrototypeSet {
    /// Random unit vectors; rows `0..num_known` are the known prototypes.
    pub fn random<R: Rng + ?Sized>(num_known: usize, num_new: usize, dim: usize, rng: &mut R) -> Self {
        let total = num_known + num_new;
        let mut vectors = DenseMatrix::zeros(total, dim);
        for v in vectors.data_mut() {
            *v = StandardNormal.sample(rng);
        }
        let (vectors, _) = vectors.row_l2_normalize();
        Self {
            vectors,
            known_ids: (0..num_known).collect(),
            new_ids: (num_known..total).collect(),
            tau_supervised: DEFAULT_TAU_SUPERVISED,
            tau_pseudo: DEFAULT_TAU_PSEUDO,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn renormalize(&mut self) {
        self.vectors = self.vectors.row_l2_normalize().0;
    }
}

/// Soft membership of embedding `z` over the prototype rows `subset`.
pub fn membership(z: &[f64], prototypes: &DenseMatrix, subset: &[usize], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::contract(format!("temperature {tau} must be positive")));
    }
    if subset.is_empty() {
        return Err(Error::contract("membership over an empty prototype set"));
    }
    let mut logits: Vec<f64> = subset
        .iter()
        .map(|&i| -(1.0 - dot(z, prototypes.row(i))) / tau)
        .collect();
    softmax_in_place(&mut logits);
    Ok(logits)
}

/// A recorded loss plus a flag set when its node set was empty (the value is
/// then a constant zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerm {
    pub var: Var,
    pub empty: bool,
}

/// Prototype negative log-likelihood
/// `(1 / (|P'||V'|)) Σ_i Σ_{v ∈ V'_i} -log p_i(v)`.
///
/// `labels[k]` is the position inside `subset` of the prototype that node
/// `nodes[k]` belongs to.
pub fn nll_loss(
    tape: &mut Tape<'_>,
    embeddings: Var,
    prototypes: Var,
    nodes: &[usize],
    labels: &[usize],
    subset: &[usize],
    tau: f64,
) -> Result<LossTerm> {
    if !(tau > 0.0) {
        return Err(Error::contract(format!("temperature {tau} must be positive")));
    }
    if nodes.len() != labels.len() {
        return Err(Error::contract("one label per node required"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= subset.len()) {
        return Err(Error::contract(format!(
            "label position {bad} outside a prototype subset of size {}",
            subset.len()
        )));
    }
    if nodes.is_empty() || subset.is_empty() {
        let var = tape.constant(DenseMatrix::scalar(0.0));
        return Ok(LossTerm { var, empty: true });
    }
    let z = tape.slice_rows(embeddings, nodes)?;
    let p = tape.slice_rows(prototypes, subset)?;
    let sims = tape.matmul_t(z, p)?;
    let logits = tape.scale(sims, 1.0 / tau)?;
    let log_probs = tape.row_log_softmax(logits)?;
    let weight = -1.0 / (subset.len() * nodes.len()) as f64;
    let mut mask = DenseMatrix::zeros(nodes.len(), subset.len());
    for (row, &l) in labels.iter().enumerate() {
        mask.set(row, l, weight);
    }
    let mask = tape.constant(mask);
    let picked = tape.mul(log_probs, mask)?;
    let var = tape.reduce_sum(picked)?;
    Ok(LossTerm { var, empty: false })
}

/// Supervised loss over labeled nodes and known prototypes with `τ_S`.
///
/// `prototype_of_class[c]` gives the row of `prototypes` standing for class
/// `c` (only consulted for the labeled nodes' classes).
pub fn supervised_loss(
    tape: &mut Tape<'_>,
    embeddings: Var,
    prototypes: Var,
    set: &PrototypeSet,
    labeled: &[usize],
    node_labels: &[usize],
    prototype_of_class: &[Option<usize>],
) -> Result<LossTerm> {
    if labeled.is_empty() {
        return Err(Error::contract("supervised loss needs labeled nodes"));
    }
    let mut labels = Vec::with_capacity(labeled.len());
    for &v in labeled {
        let class = node_labels[v];
        let proto = prototype_of_class
            .get(class)
            .copied()
            .flatten()
            .ok_or_else(|| Error::contract(format!("labeled node {v} has class {class} without a prototype")))?;
        let pos = set
            .known_ids
            .iter()
            .position(|&k| k == proto)
            .ok_or_else(|| Error::contract(format!("class {class} maps to a non-known prototype")))?;
        labels.push(pos);
    }
    nll_loss(tape, embeddings, prototypes, labeled, &labels, &set.known_ids, set.tau_supervised)
}

/// `KL(mean ‖ uniform) + Σ_i exp(-min_{j≠i} ‖p_i - p_j‖)` evaluated directly.
pub fn regularizer_value(mean_membership: &[f64], prototypes: &DenseMatrix) -> Result<f64> {
    let total: f64 = mean_membership.iter().sum();
    if (total - 1.0).abs() > 1e-8 || mean_membership.iter().any(|&p| p < 0.0) {
        return Err(Error::contract(format!("membership mean sums to {total}, not 1")));
    }
    if mean_membership.len() != prototypes.rows() {
        return Err(Error::contract("membership length differs from the prototype count"));
    }
    let k = mean_membership.len() as f64;
    let kl: f64 = mean_membership
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * libm::log(p * k))
        .sum();
    Ok(kl + prototype_spread(prototypes))
}

/// `Σ_i exp(-min_{j≠i} ‖p_i - p_j‖₂)`; zero for fewer than two prototypes.
pub fn prototype_spread(prototypes: &DenseMatrix) -> f64 {
    nearest_prototypes(prototypes)
        .iter()
        .enumerate()
        .map(|(i, &j)| libm::exp(-libm::sqrt(squared_distance(prototypes.row(i), prototypes.row(j)))))
        .sum::<f64>()
        * f64::from(u8::from(prototypes.rows() >= 2))
}

// Index of the nearest other prototype for each row (lowest index on ties).
fn nearest_prototypes(prototypes: &DenseMatrix) -> Vec<usize> {
    let k = prototypes.rows();
    (0..k)
        .map(|i| {
            let mut best = if i == 0 { 1 } else { 0 };
            let mut best_d = f64::INFINITY;
            for j in 0..k {
                if j == i {
                    continue;
                }
                let d = squared_distance(prototypes.row(i), prototypes.row(j));
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Regularizer on the tape. The KL part uses the mean membership of all
/// nodes over all prototypes at temperature `tau`.
pub fn regularizer(tape: &mut Tape<'_>, embeddings: Var, prototypes: Var, tau: f64) -> Result<Var> {
    let k = tape.shape(prototypes).0;
    let sims = tape.matmul_t(embeddings, prototypes)?;
    let logits = tape.scale(sims, 1.0 / tau)?;
    let probs = tape.row_softmax(logits)?;
    let mean = tape.col_mean(probs)?;
    let log_mean = tape.log(mean)?;
    let plogp = tape.mul(mean, log_mean)?;
    let neg_entropy = tape.reduce_sum(plogp)?;
    let kl = tape.add_scalar(neg_entropy, libm::log(k as f64))?;
    if k < 2 {
        return Ok(kl);
    }

    // the argmin is piecewise constant, so it is taken on the values
    let nearest = nearest_prototypes(tape.value(prototypes));
    let all: Vec<usize> = (0..k).collect();
    let a = tape.slice_rows(prototypes, &all)?;
    let b = tape.slice_rows(prototypes, &nearest)?;
    let diff = tape.sub(a, b)?;
    let sq = tape.mul(diff, diff)?;
    let d2 = tape.row_sum(sq)?;
    let d = tape.sqrt(d2)?;
    let neg = tape.scale(d, -1.0)?;
    let e = tape.exp(neg)?;
    let spread = tape.reduce_sum(e)?;
    tape.add(kl, spread)
}

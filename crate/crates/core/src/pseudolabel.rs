//! Pseudo-labels for nodes of unseen classes: candidate selection against a
//! quantile threshold, seeding at the nearest new prototype, label
//! propagation along distance-weighted edges and an entropy filter.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::prototype::{nll_loss, LossTerm};
use crate::tensor::{argmax, dot, entropy, softmax_in_place, squared_distance, DenseMatrix, SparseMatrix, Tape, Var};

pub const EDGE_EPSILON: f64 = 1e-8;
pub const EDGE_WEIGHT_CAP: f64 = 1e6;
/// Share of candidates affected by the entropy filter.
pub const ENTROPY_FRACTION: f64 = 0.1;

/// How the entropy filter reads "10%".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntropyKeepMode {
    /// Drop the highest-entropy tenth, keep the rest.
    #[default]
    DropTopDecile,
    /// Keep only the lowest-entropy tenth.
    KeepBottomDecile,
}

impl EntropyKeepMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::DropTopDecile => "drop_top_decile",
            Self::KeepBottomDecile => "keep_bottom_decile",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "drop_top_decile" => Some(Self::DropTopDecile),
            "keep_bottom_decile" => Some(Self::KeepBottomDecile),
            _ => None,
        }
    }
}

/// Highest inner product of `z` with any of the `known` prototype rows.
pub fn max_known_similarity(z: &[f64], prototypes: &DenseMatrix, known: &[usize]) -> f64 {
    known
        .iter()
        .map(|&k| dot(z, prototypes.row(k)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `max_{y ∈ Y_k} <p_y, z_v>` for each node in `nodes`.
pub fn labeled_similarities(
    embeddings: &DenseMatrix,
    prototypes: &DenseMatrix,
    known: &[usize],
    nodes: &[usize],
) -> Vec<f64> {
    nodes
        .iter()
        .map(|&v| max_known_similarity(embeddings.row(v), prototypes, known))
        .collect()
}

/// The `k`-th smallest similarity with `k = floor((1 - q) n) + 1`, so that at
/// least a share `q` of the labeled similarities is `>= γ`.
pub fn compute_gamma(similarities: &[f64], q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::contract(format!("quantile q = {q} outside (0, 1)")));
    }
    if similarities.is_empty() {
        return Err(Error::contract("threshold needs at least one labeled node"));
    }
    if similarities.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric { op: "compute_gamma" });
    }
    let n = similarities.len();
    // the epsilon keeps e.g. (1 - 0.9) * 10 from flooring to 0
    let k = (libm::floor((1.0 - q) * n as f64 + 1e-9) as usize + 1).min(n);
    let mut sorted = similarities.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[k - 1])
}

/// Unlabeled nodes whose best known-prototype similarity is below `gamma`.
pub fn select_candidates(
    unlabeled: &[usize],
    embeddings: &DenseMatrix,
    prototypes: &DenseMatrix,
    known: &[usize],
    gamma: f64,
) -> Vec<usize> {
    unlabeled
        .iter()
        .copied()
        .filter(|&v| max_known_similarity(embeddings.row(v), prototypes, known) < gamma)
        .collect()
}

/// Each candidate goes to the new prototype with the largest inner product
/// (lowest id on ties). Returns the prototype id per candidate and the
/// sorted set of prototypes that received a node.
pub fn seed_assignment(
    candidates: &[usize],
    embeddings: &DenseMatrix,
    prototypes: &DenseMatrix,
    new_ids: &[usize],
) -> Result<(Vec<usize>, Vec<usize>)> {
    if new_ids.is_empty() {
        return Err(Error::contract("seeding needs at least one new prototype"));
    }
    let mut order = new_ids.to_vec();
    order.sort_unstable();
    let seeds: Vec<usize> = candidates
        .iter()
        .map(|&v| {
            let z = embeddings.row(v);
            let sims: Vec<f64> = order.iter().map(|&p| dot(z, prototypes.row(p))).collect();
            order[argmax(&sims)]
        })
        .collect();
    let mut active = seeds.clone();
    active.sort_unstable();
    active.dedup();
    Ok((seeds, active))
}

/// Index of the closest prototype (Euclidean) to each embedding.
pub fn closest_prototypes(embeddings: &DenseMatrix, prototypes: &DenseMatrix) -> Vec<usize> {
    embeddings
        .row_iter()
        .map(|z| {
            let d: Vec<f64> = prototypes.row_iter().map(|p| -squared_distance(z, p)).collect();
            argmax(&d)
        })
        .collect()
}

/// `w_ij = 1 / (‖z_j - p_c‖ + ε)` on every stored edge `(i, j)`, where `p_c`
/// is the prototype closest to `z_i`; capped at [`EDGE_WEIGHT_CAP`].
pub fn edge_weights(adjacency: &SparseMatrix, embeddings: &DenseMatrix, prototypes: &DenseMatrix) -> Result<SparseMatrix> {
    if adjacency.rows() != embeddings.rows() {
        return Err(Error::dim(
            "edge_weights",
            format!("{} adjacency rows for {} embeddings", adjacency.rows(), embeddings.rows()),
        ));
    }
    if prototypes.rows() == 0 {
        return Err(Error::contract("edge weights need at least one prototype"));
    }
    let closest = closest_prototypes(embeddings, prototypes);
    let values: Vec<f64> = adjacency
        .iter()
        .map(|(i, j, _)| {
            let d = libm::sqrt(squared_distance(embeddings.row(j), prototypes.row(closest[i])));
            (1.0 / (d + EDGE_EPSILON)).min(EDGE_WEIGHT_CAP)
        })
        .collect();
    adjacency.with_values(values)
}

/// Result of label propagation: the raw scores after the last hop and their
/// row softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub raw: DenseMatrix,
    pub probabilities: DenseMatrix,
}

/// `hops` rounds of `Y ← RowNorm(W) Y` from one-hot seed rows. Seeds are
/// reset to their one-hot rows between rounds; the last round is left as is
/// so seeds also reflect their neighbourhood.
///
/// `seeds` holds `(node, class)` with `class < num_classes`.
pub fn propagate(
    seeds: &[(usize, usize)],
    num_classes: usize,
    weights: &SparseMatrix,
    hops: usize,
) -> Result<Propagation> {
    if hops == 0 {
        return Err(Error::contract("label propagation needs at least one hop"));
    }
    let n = weights.rows();
    if let Some(&(v, c)) = seeds.iter().find(|&&(v, c)| v >= n || c >= num_classes) {
        return Err(Error::contract(format!("seed ({v}, {c}) out of range")));
    }
    let transition = weights.row_normalized();
    let mut clamp = DenseMatrix::zeros(n, num_classes);
    for &(v, c) in seeds {
        clamp.row_mut(v).fill(0.0);
        clamp.set(v, c, 1.0);
    }
    let mut y = clamp.clone();
    for hop in 0..hops {
        y = transition.spmm(&y)?;
        if hop + 1 < hops {
            for &(v, _) in seeds {
                y.row_mut(v).copy_from_slice(clamp.row(v));
            }
        }
    }
    let mut probabilities = y.clone();
    for r in 0..n {
        softmax_in_place(probabilities.row_mut(r));
    }
    Ok(Propagation { raw: y, probabilities })
}

/// Applies the entropy rule to the candidates' propagated rows and returns
/// the kept `(node, class)` pairs in candidate order, class being the row
/// argmax. Ties in entropy drop later candidates first.
pub fn entropy_filter(probabilities: &DenseMatrix, candidates: &[usize], mode: EntropyKeepMode) -> Vec<(usize, usize)> {
    let n = candidates.len();
    if n == 0 {
        return Vec::new();
    }
    let share = libm::ceil(ENTROPY_FRACTION * n as f64 - 1e-9) as usize;
    let h: Vec<f64> = candidates.iter().map(|&v| entropy(probabilities.row(v))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // ascending entropy, earlier candidates first on ties
    order.sort_by(|&a, &b| h[a].total_cmp(&h[b]).then(a.cmp(&b)));
    let keep = match mode {
        EntropyKeepMode::DropTopDecile => n - share,
        EntropyKeepMode::KeepBottomDecile => share,
    };
    let mut kept = vec![false; n];
    for &i in &order[..keep] {
        kept[i] = true;
    }
    (0..n)
        .filter(|&i| kept[i])
        .map(|i| (candidates[i], argmax(probabilities.row(candidates[i]))))
        .collect()
}

/// Pseudo-label NLL at temperature `tau` over survivors and the active new
/// prototypes. `survivors` carries `(node, prototype id)`.
pub fn pseudo_label_loss(
    tape: &mut Tape<'_>,
    embeddings: Var,
    prototypes: Var,
    survivors: &[(usize, usize)],
    active: &[usize],
    tau: f64,
) -> Result<LossTerm> {
    let mut nodes = Vec::with_capacity(survivors.len());
    let mut labels = Vec::with_capacity(survivors.len());
    for &(v, p) in survivors {
        let pos = active
            .iter()
            .position(|&a| a == p)
            .ok_or_else(|| Error::contract(format!("pseudo-label {p} of node {v} is not an active prototype")))?;
        nodes.push(v);
        labels.push(pos);
    }
    nll_loss(tape, embeddings, prototypes, &nodes, &labels, active, tau)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

impl WeightStats {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            count: values.len(),
            mean,
            std: libm::sqrt(var),
        })
    }
}

/// Edge weights split by whether the endpoints share a ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeWeightReport {
    pub homophilic: Option<WeightStats>,
    pub heterophilic: Option<WeightStats>,
}

impl EdgeWeightReport {
    /// Homophilic minus heterophilic mean, when both kinds exist.
    pub fn mean_difference(&self) -> Option<f64> {
        Some(self.homophilic?.mean - self.heterophilic?.mean)
    }
}

/// Population statistics over every stored (directed) edge.
pub fn edge_weight_report(weights: &SparseMatrix, labels: &[usize]) -> Result<EdgeWeightReport> {
    if labels.len() != weights.rows() {
        return Err(Error::dim(
            "edge_weight_report",
            format!("{} labels for {} nodes", labels.len(), weights.rows()),
        ));
    }
    let (mut homo, mut hetero) = (Vec::new(), Vec::new());
    for (i, j, w) in weights.iter() {
        if labels[i] == labels[j] {
            homo.push(w);
        } else {
            hetero.push(w);
        }
    }
    Ok(EdgeWeightReport {
        homophilic: WeightStats::of(&homo),
        heterophilic: WeightStats::of(&hetero),
    })
}

/// Settings for one pass of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabelConfig {
    pub q: f64,
    pub hops: usize,
    pub mode: EntropyKeepMode,
}

/// Everything the pipeline derived from one epoch's embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelState {
    pub gamma: f64,
    pub candidates: Vec<usize>,
    /// New-prototype id per candidate.
    pub seed_labels: Vec<usize>,
    pub edge_weights: SparseMatrix,
    /// `n × |new_ids|` rows after the softmax; column `c` is `new_ids[c]`.
    pub propagated: DenseMatrix,
    /// `(node, new-prototype id)` for the nodes that passed the filter.
    pub survivors: Vec<(usize, usize)>,
    pub active_prototypes: Vec<usize>,
}

impl PseudoLabelState {
    /// Runs selection, seeding, propagation and filtering.
    ///
    /// `adjacency` is the plain graph adjacency; `new_ids` must be sorted.
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        adjacency: &SparseMatrix,
        embeddings: &DenseMatrix,
        prototypes: &DenseMatrix,
        known_ids: &[usize],
        new_ids: &[usize],
        labeled: &[usize],
        unlabeled: &[usize],
        cfg: &PseudoLabelConfig,
    ) -> Result<Self> {
        let sims = labeled_similarities(embeddings, prototypes, known_ids, labeled);
        let gamma = compute_gamma(&sims, cfg.q)?;
        let weights = edge_weights(adjacency, embeddings, prototypes)?;
        let n = embeddings.rows();
        if new_ids.is_empty() {
            return Ok(Self {
                gamma,
                candidates: Vec::new(),
                seed_labels: Vec::new(),
                edge_weights: weights,
                propagated: DenseMatrix::zeros(n, 0),
                survivors: Vec::new(),
                active_prototypes: Vec::new(),
            });
        }
        let candidates = select_candidates(unlabeled, embeddings, prototypes, known_ids, gamma);
        let (seed_labels, active) = seed_assignment(&candidates, embeddings, prototypes, new_ids)?;
        let column = |p: usize| new_ids.iter().position(|&x| x == p).expect("seed is a new prototype");
        let seeds: Vec<(usize, usize)> = candidates
            .iter()
            .zip(&seed_labels)
            .map(|(&v, &p)| (v, column(p)))
            .collect();
        let prop = propagate(&seeds, new_ids.len(), &weights, cfg.hops)?;
        let survivors = entropy_filter(&prop.probabilities, &candidates, cfg.mode)
            .into_iter()
            .filter(|&(v, _)| prop.raw.row(v).iter().any(|&m| m > 0.0))
            .map(|(v, c)| (v, new_ids[c]))
            .collect();
        Ok(Self {
            gamma,
            candidates,
            seed_labels,
            edge_weights: weights,
            propagated: prop.probabilities,
            survivors,
            active_prototypes: active,
        })
    }
}

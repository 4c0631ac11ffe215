use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::kmeans::{constrained_kmeans, pairwise_distances, silhouette_from_distances, DEFAULT_MAX_ITERS};
use super::matched_accuracy;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateConfig {
    pub k_max: usize,
    /// Share of each probe class pinned as anchors.
    pub anchor_share: f64,
    /// Clusters holding less than this share of the unlabeled nodes are
    /// discarded from the final count.
    pub min_cluster_share: f64,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            k_max: 10,
            anchor_share: 0.5,
            min_cluster_share: 0.05,
            seed: 0,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub estimate: usize,
    /// `k` with the best matched accuracy on the held-out probe nodes.
    pub k_validation: usize,
    /// `k` with the best silhouette on the unlabeled nodes.
    pub k_silhouette: usize,
    pub k_hat: usize,
    pub validation_scores: Vec<(usize, f64)>,
    pub silhouette_scores: Vec<(usize, f64)>,
}

/// Number of classes among `unlabeled` from embeddings.
///
/// Probe nodes (labeled nodes of classes the encoder was not trained on) are
/// split per class into anchors, pinned to their class during constrained
/// k-means, and held-out validation nodes. For each `k` from the probe class
/// count (at least 2) to `k_max`, probe and unlabeled nodes are clustered
/// jointly; `k̂` averages the best-`k` by validation accuracy and by
/// unlabeled silhouette. A last clustering at `k̂` counts the clusters with
/// at least `min_cluster_share` of the unlabeled nodes.
pub fn estimate_num_classes(
    embeddings: &DenseMatrix,
    labels: &[usize],
    probe_nodes: &[usize],
    unlabeled: &[usize],
    cfg: &EstimateConfig,
) -> Result<EstimateReport> {
    let mut probe_classes: Vec<usize> = probe_nodes.iter().map(|&v| labels[v]).collect();
    probe_classes.sort_unstable();
    probe_classes.dedup();
    if probe_classes.is_empty() || unlabeled.is_empty() {
        return Err(Error::contract("estimation needs probe and unlabeled nodes"));
    }
    let k_min = probe_classes.len().max(2);
    if cfg.k_max < k_min {
        return Err(Error::contract(format!(
            "k_max = {} is below the {} probe classes",
            cfg.k_max,
            probe_classes.len()
        )));
    }
    if !(cfg.anchor_share > 0.0 && cfg.anchor_share < 1.0) {
        return Err(Error::contract("anchor share must lie in (0, 1)"));
    }

    let mut r = rng::seeded(cfg.seed);
    let mut anchors_of = Vec::new(); // (node, compact class)
    let mut held_out = Vec::new();
    for (ci, &c) in probe_classes.iter().enumerate() {
        let mut members: Vec<usize> = probe_nodes.iter().copied().filter(|&v| labels[v] == c).collect();
        members.sort_unstable();
        members.dedup();
        members.shuffle(&mut r);
        let take = (libm::ceil(cfg.anchor_share * members.len() as f64) as usize).clamp(1, members.len());
        anchors_of.extend(members[..take].iter().map(|&v| (v, ci)));
        held_out.extend_from_slice(&members[take..]);
    }
    if held_out.is_empty() {
        return Err(Error::contract("probe classes too small to hold out validation nodes"));
    }

    // rows: probe nodes (anchors, then held out) followed by unlabeled nodes
    let mut rows: Vec<usize> = anchors_of.iter().map(|&(v, _)| v).collect();
    rows.extend_from_slice(&held_out);
    let probe_rows = rows.len();
    let mut is_probe = vec![false; labels.len()];
    rows.iter().for_each(|&v| is_probe[v] = true);
    rows.extend(unlabeled.iter().copied().filter(|&v| !is_probe[v]));
    let points = embeddings.select_rows(&rows);
    if cfg.k_max > points.rows() {
        return Err(Error::contract("k_max exceeds the number of clustered nodes"));
    }
    let anchors: Vec<(usize, usize)> = anchors_of.iter().enumerate().map(|(i, &(_, c))| (i, c)).collect();
    let held_rows: Vec<usize> = (anchors.len()..probe_rows).collect();
    let held_truth: Vec<usize> = rows.iter().map(|&v| labels[v]).collect();
    let unl_range = probe_rows..rows.len();
    let unl_points = points.select_rows(&unl_range.clone().collect::<Vec<_>>());
    let distances = pairwise_distances(&unl_points);

    let mut validation_scores = Vec::new();
    let mut silhouette_scores = Vec::new();
    for k in k_min..=cfg.k_max {
        let res = constrained_kmeans(&points, k, &anchors, rng::derive(cfg.seed, k as u64), cfg.max_iters)?;
        validation_scores.push((k, matched_accuracy(&res.labels, &held_truth, &held_rows)?));
        let unl_labels = &res.labels[unl_range.clone()];
        let distinct = {
            let mut l = unl_labels.to_vec();
            l.sort_unstable();
            l.dedup();
            l.len()
        };
        let s = if distinct >= 2 {
            silhouette_from_distances(&distances, unl_labels)?
        } else {
            -1.0
        };
        silhouette_scores.push((k, s));
    }
    let k_validation = first_plateau_end(&validation_scores).unwrap_or(k_min);
    let k_silhouette = silhouette_scores
        .iter()
        .fold((k_min, f64::NEG_INFINITY), |acc, &(k, s)| if s > acc.1 { (k, s) } else { acc })
        .0;
    let k_hat = libm::round((k_validation + k_silhouette) as f64 / 2.0) as usize;

    let fin = constrained_kmeans(&points, k_hat, &anchors, rng::derive(cfg.seed, 0xf1a1), cfg.max_iters)?;
    let mut sizes = vec![0usize; k_hat];
    for &c in &fin.labels[unl_range.clone()] {
        sizes[c] += 1;
    }
    let floor = cfg.min_cluster_share * unl_range.len() as f64;
    let estimate = sizes.iter().filter(|&&s| s as f64 >= floor && s > 0).count();
    Ok(EstimateReport {
        estimate,
        k_validation,
        k_silhouette,
        k_hat,
        validation_scores,
        silhouette_scores,
    })
}

/// Probe accuracy saturates once every probe class has a cluster and only
/// drops when a probe class fragments, so the best `k` is the end of the
/// first run of maximal scores. Later isolated maxima come from lucky
/// k-means restarts.
fn first_plateau_end(scores: &[(usize, f64)]) -> Option<usize> {
    let top = scores.iter().map(|&(_, s)| s).fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .skip_while(|&&(_, s)| s < top)
        .take_while(|&&(_, s)| s == top)
        .last()
        .map(|&(k, _)| k)
}

//! Matched accuracy, clustering primitives, spectral clustering and the
//! class-count estimator.

mod eigen;
mod estimate;
mod hungarian;
mod kmeans;
mod spectral;

use alloc::string::String;
use alloc::vec::Vec;

pub use eigen::{symmetric_top_k, DENSE_LIMIT};
pub use estimate::{estimate_num_classes, EstimateConfig, EstimateReport};
pub use hungarian::{hungarian, AssignmentResult};
pub use kmeans::{
    constrained_kmeans, kmeans, pairwise_distances, silhouette, silhouette_from_distances, KMeansResult,
    DEFAULT_MAX_ITERS,
};
pub use spectral::spectral_cluster;

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Accuracy on `subset` after the best one-to-one relabeling of predicted
/// ids onto true ids (maximum agreement via the Hungarian algorithm).
pub fn accuracy_all(predictions: &[usize], truths: &[usize], subset: &[usize]) -> Result<f64> {
    matched_accuracy(predictions, truths, subset)
}

/// Same matching restricted to nodes of new classes.
pub fn accuracy_new(predictions: &[usize], truths: &[usize], subset: &[usize]) -> Result<f64> {
    matched_accuracy(predictions, truths, subset)
}

/// Plain accuracy, no relabeling.
pub fn accuracy_known(predictions: &[usize], truths: &[usize], subset: &[usize]) -> Result<f64> {
    check(predictions, truths, subset)?;
    let correct = subset.iter().filter(|&&v| predictions[v] == truths[v]).count();
    Ok(correct as f64 / subset.len() as f64)
}

fn check(predictions: &[usize], truths: &[usize], subset: &[usize]) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::contract("accuracy over an empty node set"));
    }
    if let Some(&v) = subset.iter().find(|&&v| v >= predictions.len() || v >= truths.len()) {
        return Err(Error::contract(alloc::format!("node {v} has no prediction or label")));
    }
    Ok(())
}

fn compact(ids: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut v: Vec<usize> = ids.collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn matched_accuracy(predictions: &[usize], truths: &[usize], subset: &[usize]) -> Result<f64> {
    check(predictions, truths, subset)?;
    let pred_ids = compact(subset.iter().map(|&v| predictions[v]));
    let true_ids = compact(subset.iter().map(|&v| truths[v]));
    let mut counts = DenseMatrix::zeros(pred_ids.len(), true_ids.len());
    for &v in subset {
        let p = pred_ids.binary_search(&predictions[v]).unwrap_or(0);
        let t = true_ids.binary_search(&truths[v]).unwrap_or(0);
        counts.set(p, t, counts.get(p, t) - 1.0);
    }
    let assignment = hungarian(&counts)?;
    Ok(-assignment.total_cost / subset.len() as f64)
}

/// One evaluated run. `acc_known` is absent for methods that cannot name
/// known classes.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub method: String,
    pub dataset: String,
    pub fold: usize,
    pub repeat: usize,
    pub acc_all: f64,
    pub acc_known: Option<f64>,
    pub acc_new: f64,
    pub seed: u64,
}

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{squared_distance, DenseMatrix};

pub const DEFAULT_MAX_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: DenseMatrix,
    /// Within-cluster sum of squares after every assignment step.
    pub inertia_history: Vec<f64>,
}

impl KMeansResult {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

/// Lloyd's algorithm from D²-weighted seeding.
pub fn kmeans(points: &DenseMatrix, k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    constrained_kmeans(points, k, &[], seed, max_iters)
}

/// k-means where each `(point, cluster)` anchor is pinned to its cluster.
///
/// Clusters holding anchors start at their anchors' mean; the others are
/// seeded by D² sampling against the centers placed so far.
pub fn constrained_kmeans(
    points: &DenseMatrix,
    k: usize,
    anchors: &[(usize, usize)],
    seed: u64,
    max_iters: usize,
) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::contract("k-means needs k >= 1"));
    }
    if k > n {
        return Err(Error::contract(format!("k = {k} exceeds the {n} points")));
    }
    if !points.is_finite() {
        return Err(Error::Numeric { op: "kmeans" });
    }
    let mut pinned: Vec<Option<usize>> = vec![None; n];
    for &(p, c) in anchors {
        if p >= n || c >= k {
            return Err(Error::contract(format!("anchor ({p}, {c}) out of range")));
        }
        pinned[p] = Some(c);
    }

    let mut r = rng::seeded(seed);
    let mut centers = initial_centers(points, k, anchors, &mut r);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for i in 0..n {
            let c = pinned[i].unwrap_or_else(|| nearest(points.row(i), &centers).0);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        reseed_empty(points, &mut centers, &mut labels, &pinned);
        history.push(inertia(points, &centers, &labels));
        if !changed && history.len() > 1 {
            break;
        }
        centers = cluster_means(points, &labels, &centers);
    }
    history.push(inertia(points, &centers, &labels));
    Ok(KMeansResult {
        labels,
        centers,
        inertia_history: history,
    })
}

fn initial_centers<R: Rng + ?Sized>(points: &DenseMatrix, k: usize, anchors: &[(usize, usize)], r: &mut R) -> DenseMatrix {
    let (n, d) = points.shape();
    let mut centers = DenseMatrix::zeros(k, d);
    let mut placed = vec![false; k];
    let mut counts = vec![0usize; k];
    for &(p, c) in anchors {
        counts[c] += 1;
        for (x, &v) in centers.row_mut(c).iter_mut().zip(points.row(p)) {
            *x += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            centers.row_mut(c).iter_mut().for_each(|x| *x *= inv);
            placed[c] = true;
        }
    }
    let mut best = vec![f64::INFINITY; n];
    let refresh = |best: &mut [f64], center: &[f64]| {
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(squared_distance(points.row(i), center));
        }
    };
    for c in 0..k {
        if placed[c] {
            refresh(&mut best, centers.row(c));
        }
    }
    for c in 0..k {
        if placed[c] {
            continue;
        }
        let total: f64 = best.iter().filter(|b| b.is_finite()).sum();
        let pick = if best.iter().all(|b| b.is_infinite()) || total <= 0.0 {
            r.random_range(0..n)
        } else {
            let mut target = r.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &b) in best.iter().enumerate() {
                if target < b {
                    chosen = i;
                    break;
                }
                target -= b;
            }
            chosen
        };
        centers.row_mut(c).copy_from_slice(points.row(pick));
        refresh(&mut best, centers.row(c));
    }
    centers
}

fn nearest(x: &[f64], centers: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.row_iter().enumerate() {
        let d = squared_distance(x, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn cluster_means(points: &DenseMatrix, labels: &[usize], previous: &DenseMatrix) -> DenseMatrix {
    let k = previous.rows();
    let mut sums = DenseMatrix::zeros(k, points.cols());
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for (s, &v) in sums.row_mut(c).iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            sums.row_mut(c).copy_from_slice(previous.row(c));
        } else {
            let inv = 1.0 / counts[c] as f64;
            sums.row_mut(c).iter_mut().for_each(|s| *s *= inv);
        }
    }
    sums
}

// An empty cluster takes over the free point farthest from its center.
fn reseed_empty(points: &DenseMatrix, centers: &mut DenseMatrix, labels: &mut [usize], pinned: &[Option<usize>]) {
    let k = centers.rows();
    loop {
        let mut counts = vec![0usize; k];
        for &c in labels.iter() {
            counts[c] += 1;
        }
        let Some(empty) = (0..k).find(|&c| counts[c] == 0) else {
            return;
        };
        let far = (0..labels.len())
            .filter(|&i| pinned[i].is_none() && counts[labels[i]] > 1)
            .map(|i| (i, squared_distance(points.row(i), centers.row(labels[i]))))
            .fold(None, |acc: Option<(usize, f64)>, (i, d)| match acc {
                Some((_, bd)) if bd >= d => acc,
                _ => Some((i, d)),
            });
        let Some((i, _)) = far else {
            return;
        };
        labels[i] = empty;
        centers.row_mut(empty).copy_from_slice(points.row(i));
    }
}

fn inertia(points: &DenseMatrix, centers: &DenseMatrix, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &c)| squared_distance(points.row(i), centers.row(c)))
        .sum()
}

/// Euclidean distances between all pairs of rows.
pub fn pairwise_distances(points: &DenseMatrix) -> DenseMatrix {
    let n = points.rows();
    let mut d = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = libm::sqrt(squared_distance(points.row(i), points.row(j)));
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    d
}

/// Mean silhouette `(b - a) / max(a, b)`; points in singleton clusters
/// score 0.
pub fn silhouette(points: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    silhouette_from_distances(&pairwise_distances(points), labels)
}

pub fn silhouette_from_distances(distances: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    let n = labels.len();
    if distances.shape() != (n, n) {
        return Err(Error::dim("silhouette", format!("{n} labels for a {:?} distance matrix", distances.shape())));
    }
    let mut ids = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::contract("silhouette needs at least two clusters"));
    }
    let compact: Vec<usize> = labels.iter().map(|l| ids.binary_search(l).unwrap_or(0)).collect();
    let k = ids.len();
    let mut sizes = vec![0usize; k];
    for &c in &compact {
        sizes[c] += 1;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (j, &c) in compact.iter().enumerate() {
            sums[c] += distances.get(i, j);
        }
        let own = compact[i];
        if sizes[own] < 2 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

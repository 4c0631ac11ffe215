use std::collections::BTreeSet;

use pown_core::encoder::{corrupt, GcnParams};
use pown_core::eval::{accuracy_all, hungarian, kmeans, spectral_cluster};
use pown_core::graph::{make_class_folds, max_feasible_folds, open_world_split};
use pown_core::prototype::membership;
use pown_core::pseudolabel::{entropy_filter, propagate, select_candidates, EntropyKeepMode};
use pown_core::tensor::{entropy, DenseMatrix, SparseMatrix};
use pown_core::{rng, Graph, SplitMasks};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| r.random_range(lo..hi)).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

fn unit_rows(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    rand_matrix(r, rows, cols, -1.0, 1.0).row_l2_normalize().0
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Minimum-cost assignment by enumeration over the zero-padded square.
fn brute_force(cost: &DenseMatrix) -> f64 {
    let s = cost.rows().max(cost.cols());
    let at = |i: usize, j: usize| if i < cost.rows() && j < cost.cols() { cost.get(i, j) } else { 0.0 };
    permutations(s)
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| at(i, j)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

fn random_graph(r: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    edges
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hungarian_matches_exhaustive_search(seed in any::<u64>(), rows in 1usize..=6, cols in 1usize..=6, integer in any::<bool>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut cost = rand_matrix(&mut r, rows, cols, -20.0, 20.0);
        if integer {
            cost = cost.map(f64::round);
        }
        let res = hungarian(&cost).unwrap();
        let best = brute_force(&cost);
        prop_assert!((res.total_cost - best).abs() < 1e-9, "{} vs {best}", res.total_cost);
        let pairs: Vec<(usize, usize)> = res.pairs().collect();
        prop_assert_eq!(pairs.len(), rows.min(cols));
        let rs: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
        let cs: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
        prop_assert_eq!(rs.len(), pairs.len());
        prop_assert_eq!(cs.len(), pairs.len());
        let sum: f64 = pairs.iter().map(|&(i, j)| cost.get(i, j)).sum();
        prop_assert!((sum - res.total_cost).abs() < 1e-9);
    }

    #[test]
    fn membership_is_a_distribution(seed in any::<u64>(), protos in 1usize..8, dim in 2usize..10, tau in 0.1f64..2.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let p = unit_rows(&mut r, protos, dim);
        let z = unit_rows(&mut r, 1, dim);
        let mut subset: Vec<usize> = (0..protos).filter(|_| r.random_bool(0.7)).collect();
        if subset.is_empty() {
            subset.push(0);
        }
        let m = membership(z.row(0), &p, &subset, tau).unwrap();
        prop_assert_eq!(m.len(), subset.len());
        prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(m.iter().all(|&x| x > 0.0 && x <= 1.0));
        prop_assert!(subset.len() == 1 || m.iter().all(|&x| x < 1.0));
    }

    #[test]
    fn propagation_matches_dense_reference(seed in any::<u64>(), n in 2usize..14, classes in 1usize..4, hops in 1usize..4) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut triplets = Vec::new();
        for (u, v) in random_graph(&mut r, n, 0.35) {
            let w = r.random_range(0.01..5.0);
            triplets.push((u, v, w));
            triplets.push((v, u, r.random_range(0.01..5.0)));
        }
        let weights = SparseMatrix::from_triplets(n, n, &triplets).unwrap();
        let mut nodes: Vec<usize> = (0..n).collect();
        nodes.shuffle(&mut r);
        let seeds: Vec<(usize, usize)> = nodes[..r.random_range(1..=n)].iter().map(|&v| (v, r.random_range(0..classes))).collect();
        let out = propagate(&seeds, classes, &weights, hops).unwrap();

        // dense oracle
        let w = weights.to_dense();
        let mut clamp = vec![vec![0.0; classes]; n];
        for &(v, c) in &seeds {
            clamp[v][c] = 1.0;
        }
        let mut y = clamp.clone();
        for hop in 0..hops {
            let mut next = vec![vec![0.0; classes]; n];
            for i in 0..n {
                let deg: f64 = (0..n).map(|j| w.get(i, j)).sum();
                if deg == 0.0 {
                    continue;
                }
                for j in 0..n {
                    for c in 0..classes {
                        next[i][c] += w.get(i, j) / deg * y[j][c];
                    }
                }
            }
            y = next;
            if hop + 1 < hops {
                for &(v, _) in &seeds {
                    y[v] = clamp[v].clone();
                }
            }
        }
        for i in 0..n {
            let row_sum: f64 = out.raw.row(i).iter().sum();
            // row-stochastic transitions never create mass
            prop_assert!(row_sum <= 1.0 + 1e-12);
            for c in 0..classes {
                prop_assert!((out.raw.get(i, c) - y[i][c]).abs() < 1e-12);
            }
            prop_assert!((out.probabilities.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // rows of the transition matrix are stochastic where an edge exists
        let t = weights.row_normalized();
        for i in 0..n {
            let s: f64 = t.row(i).1.iter().sum();
            let ok = if weights.degree(i) == 0 { s == 0.0 } else { (s - 1.0).abs() < 1e-12 };
            prop_assert!(ok, "row {} sums to {}", i, s);
        }
    }

    #[test]
    fn entropy_filter_counts_and_order(seed in any::<u64>(), n in 1usize..60, classes in 1usize..5, keep_bottom in any::<bool>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let total = n + r.random_range(0..10);
        let mut probs = rand_matrix(&mut r, total, classes, -3.0, 3.0).row_softmax();
        // some exact ties
        if total > 1 && r.random_bool(0.5) {
            let row = probs.row(0).to_vec();
            probs.row_mut(1).copy_from_slice(&row);
        }
        let mut ids: Vec<usize> = (0..total).collect();
        ids.shuffle(&mut r);
        let candidates = &ids[..n];
        let mode = if keep_bottom { EntropyKeepMode::KeepBottomDecile } else { EntropyKeepMode::DropTopDecile };
        let kept = entropy_filter(&probs, candidates, mode);
        let decile = (n as f64 * 0.1).ceil() as usize;
        let expected = if keep_bottom { decile } else { n - decile };
        prop_assert_eq!(kept.len(), expected);
        let kept_nodes: BTreeSet<usize> = kept.iter().map(|k| k.0).collect();
        let h = |v: usize| entropy(probs.row(v));
        let worst_kept = kept_nodes.iter().map(|&v| h(v)).fold(f64::NEG_INFINITY, f64::max);
        for &v in candidates.iter().filter(|v| !kept_nodes.contains(v)) {
            prop_assert!(worst_kept <= h(v));
        }
        for &(v, c) in &kept {
            let row = probs.row(v);
            prop_assert!(row.iter().all(|&x| x <= row[c]));
        }
    }

    #[test]
    fn candidates_grow_with_gamma(seed in any::<u64>(), g1 in -1.0f64..1.0, g2 in -1.0f64..1.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let z = unit_rows(&mut r, 30, 5);
        let p = unit_rows(&mut r, 4, 5);
        let unlabeled: Vec<usize> = (0..30).collect();
        let known = [0, 1];
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let a = select_candidates(&unlabeled, &z, &p, &known, lo);
        let b = select_candidates(&unlabeled, &z, &p, &known, hi);
        prop_assert!(a.len() <= b.len());
        prop_assert!(a.iter().all(|v| b.contains(v)));
    }

    #[test]
    fn encoder_is_permutation_equivariant(seed in any::<u64>(), n in 2usize..15, layers in 2usize..=3) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_matrix(&mut r, n, 4, -1.0, 1.0);
        let edges = random_graph(&mut r, n, 0.3);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let g = Graph::new(x.clone(), &edges, vec![0; n], 1).unwrap();
        let mut px = DenseMatrix::zeros(n, 4);
        for i in 0..n {
            px.row_mut(perm[i]).copy_from_slice(x.row(i));
        }
        let pedges: Vec<(usize, usize)> = edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let pg = Graph::new(px, &pedges, vec![0; n], 1).unwrap();
        let params = GcnParams::new(4, 6, layers, 0.0, &mut rng::seeded(seed)).unwrap();
        let z = params.embed(&g.normalize_adjacency(), g.features()).unwrap();
        let pz = params.embed(&pg.normalize_adjacency(), pg.features()).unwrap();
        for i in 0..n {
            for (a, b) in z.row(i).iter().zip(pz.row(perm[i])) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn accuracy_ignores_prediction_ids(seed in any::<u64>(), n in 1usize..40, k in 1usize..6) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| r.random_range(0..k + 1)).collect();
        let mut relabel: Vec<usize> = (0..k + 1).map(|i| 10 * i + 3).collect();
        relabel.shuffle(&mut r);
        let renamed: Vec<usize> = pred.iter().map(|&p| relabel[p]).collect();
        let all: Vec<usize> = (0..n).collect();
        let a = accuracy_all(&pred, &truth, &all).unwrap();
        prop_assert_eq!(a, accuracy_all(&renamed, &truth, &all).unwrap());
        // never below the best constant prediction
        let mut counts = vec![0usize; k];
        truth.iter().for_each(|&t| counts[t] += 1);
        prop_assert!(a + 1e-12 >= *counts.iter().max().unwrap() as f64 / n as f64 / (k + 1) as f64);
    }

    #[test]
    fn kmeans_inertia_never_increases(seed in any::<u64>(), n in 3usize..60, k in 1usize..5) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let points = rand_matrix(&mut r, n, 3, -5.0, 5.0);
        let k = k.min(n);
        let res = kmeans(&points, k, seed, 300).unwrap();
        for w in res.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", res.inertia_history);
        }
        prop_assert!(res.labels.iter().all(|&l| l < k));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn spectral_recovers_connected_components(seed in any::<u64>(), c in 2usize..5) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut triplets = Vec::new();
        let mut truth = Vec::new();
        let mut base = 0;
        for comp in 0..c {
            let size = r.random_range(4..10);
            for i in 0..size {
                // a ring keeps each component connected; chords add variety
                let j = (i + 1) % size;
                triplets.push((base + i, base + j, 1.0));
                triplets.push((base + j, base + i, 1.0));
                let k = r.random_range(0..size);
                if k != i && r.random_bool(0.5) {
                    triplets.push((base + i, base + k, 1.0));
                    triplets.push((base + k, base + i, 1.0));
                }
                truth.push(comp);
            }
            base += size;
        }
        // duplicate chords sum on construction; reset to unit weights
        let summed = SparseMatrix::from_triplets(base, base, &triplets).unwrap();
        let adj = summed.with_values(vec![1.0; summed.nnz()]).unwrap();
        let labels = spectral_cluster(&adj, c, seed).unwrap();
        let all: Vec<usize> = (0..base).collect();
        prop_assert_eq!(accuracy_all(&labels, &truth, &all).unwrap(), 1.0);
    }

    #[test]
    fn normalized_adjacency_is_symmetric_and_contractive(seed in any::<u64>(), n in 1usize..25) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let edges = random_graph(&mut r, n, 0.25);
        let g = Graph::new(DenseMatrix::zeros(n, 1), &edges, vec![0; n], 1).unwrap();
        let a = g.normalize_adjacency();
        prop_assert!(a.is_symmetric(1e-12));
        // power iteration for the spectral radius
        let mut v = rand_matrix(&mut r, n, 1, 0.1, 1.0);
        let mut radius = 0.0;
        for _ in 0..300 {
            let w = a.spmm(&v).unwrap();
            let norm = w.frobenius_norm();
            radius = norm / v.frobenius_norm();
            if norm == 0.0 {
                break;
            }
            v = w.scale(1.0 / norm);
        }
        prop_assert!(radius <= 1.0 + 1e-9, "radius {radius}");
    }

    #[test]
    fn fold_roles_partition_the_classes(seed in any::<u64>(), classes in 4usize..14, r_inv in 2usize..6) {
        let ratio = 1.0 / r_inv as f64;
        let folds = max_feasible_folds(classes, ratio);
        prop_assume!(folds >= 2);
        let plan = pown_core::ClassFoldPlan::new(classes, folds, seed).unwrap();
        let n = classes * 4;
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let g = Graph::new(DenseMatrix::zeros(n, 1), &[], labels, classes).unwrap();
        let train: Vec<usize> = (0..n).step_by(2).collect();
        let val: Vec<usize> = (1..n).step_by(4).collect();
        let test: Vec<usize> = (3..n).step_by(4).collect();
        let masks = SplitMasks::from_indices(n, &train, &val, &test).unwrap();
        for t in 0..folds {
            let split = open_world_split(&g, &masks, &plan, t, (t + 1) % folds).unwrap();
            let mut all: Vec<usize> = split.known_classes.iter()
                .chain(&split.validation_new_classes)
                .chain(&split.test_new_classes)
                .copied()
                .collect();
            let len = all.len();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), len);
            prop_assert_eq!(all, (0..classes).collect::<Vec<_>>());
            prop_assert_eq!(&split.test_new_classes, &plan.folds[t]);
            prop_assert!(split.labeled.iter().all(|&v| split.is_known(v % classes)));
            let mut nodes: Vec<usize> = split.labeled.iter().chain(&split.unlabeled).copied().collect();
            nodes.sort_unstable();
            prop_assert_eq!(nodes, (0..n).collect::<Vec<_>>());
        }
        let _ = make_class_folds;
    }
}

#[test]
fn corruption_rarely_fixes_rows() {
    let n = 100;
    let x = DenseMatrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
    let mut fixed = 0;
    for seed in 0..100 {
        let c = corrupt(&x, seed);
        let mut rows: Vec<f64> = c.data().to_vec();
        fixed += (0..n).filter(|&i| rows[i] == i as f64).count();
        rows.sort_by(f64::total_cmp);
        assert_eq!(rows, x.data(), "rows must be a permutation");
    }
    let mean = fixed as f64 / (100 * n) as f64;
    assert!(mean < 0.05, "mean fixed fraction {mean}");
}

//! Comparison methods sharing the open-world split and metrics with the
//! prototype model: a supervised GCN, infomax embeddings + k-means, and
//! spectral clustering of the structure alone.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::encoder::{corrupt_with, encode, propagate_layers, GcnParams};
use crate::error::{Error, Result};
use crate::eval::{accuracy_all, accuracy_known, accuracy_new, kmeans, spectral_cluster, DEFAULT_MAX_ITERS};
use crate::graph::{Graph, OpenWorldSplit};
use crate::infomax::{dgi_loss, Discriminator};
use crate::rng;
use crate::tensor::{AdamState, DenseMatrix, Tape};
use crate::trainer::{fit, PownModel, TrainConfig, TrainTrace};

/// The methods a run can use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Pown,
    Gcn,
    DgiKmeans,
    Spectral,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pown, Method::Gcn, Method::DgiKmeans, Method::Spectral];

    pub fn name(self) -> &'static str {
        match self {
            Self::Pown => "pown",
            Self::Gcn => "gcn",
            Self::DgiKmeans => "dgi-kmeans",
            Self::Spectral => "spectral",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Whether predictions carry known-class identities.
    pub fn names_known_classes(self) -> bool {
        matches!(self, Self::Pown | Self::Gcn)
    }
}

/// Test accuracies of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub acc_all: f64,
    pub acc_known: Option<f64>,
    pub acc_new: f64,
}

/// Scores predictions on the test nodes: matched accuracy over known and
/// test-new classes, matched accuracy over test-new classes, and (when
/// `with_known`) plain accuracy over known classes.
pub fn score_predictions(predictions: &[usize], graph: &Graph, split: &OpenWorldSplit, with_known: bool) -> Result<Scores> {
    let labels = graph.labels();
    let all = split.test_eval_nodes(labels);
    let new = split.test_new_nodes(labels);
    let known = split.test_known_nodes(labels);
    let acc_new = if new.is_empty() { 0.0 } else { accuracy_new(predictions, labels, &new)? };
    let acc_known = if with_known && !known.is_empty() {
        Some(accuracy_known(predictions, labels, &known)?)
    } else {
        None
    };
    Ok(Scores {
        acc_all: accuracy_all(predictions, labels, &all)?,
        acc_known,
        acc_new,
    })
}

/// What a run leaves behind besides its scores.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub scores: Scores,
    pub predictions: Vec<usize>,
    /// Present for the prototype model.
    pub trace: Option<TrainTrace>,
    pub model: Option<PownModel>,
}

pub fn run_method(method: Method, graph: &Graph, split: &OpenWorldSplit, cfg: &TrainConfig) -> Result<RunOutcome> {
    match method {
        Method::Pown => run_pown(graph, split, cfg),
        Method::Gcn => run_gcn_baseline(graph, split, cfg).map(|(o, _)| o),
        Method::DgiKmeans => run_dgi_kmeans(graph, split, cfg),
        Method::Spectral => run_spectral(graph, split, cfg),
    }
}

pub fn run_pown(graph: &Graph, split: &OpenWorldSplit, cfg: &TrainConfig) -> Result<RunOutcome> {
    let fitted = fit(graph, split, cfg)?;
    let predictions = fitted
        .model
        .predict(&graph.normalize_adjacency(), graph.features(), graph.num_classes())?;
    Ok(RunOutcome {
        scores: score_predictions(&predictions, graph, split, true)?,
        predictions,
        trace: Some(fitted.trace),
        model: Some(fitted.model),
    })
}

/// GCN with one output per class, trained by cross-entropy on the labeled
/// nodes. The softmax runs over the known-class outputs only, so new-class
/// output weights see no supervised gradient. Early stopping follows
/// validation accuracy on known classes. Also returns the trained weights.
pub fn run_gcn_baseline(graph: &Graph, split: &OpenWorldSplit, cfg: &TrainConfig) -> Result<(RunOutcome, GcnParams)> {
    cfg.validate()?;
    if split.labeled.is_empty() {
        return Err(Error::contract("degenerate split: no labeled nodes"));
    }
    let c = graph.num_classes();
    let labels = graph.labels();
    let mut r = rng::seeded(rng::derive(cfg.seed, 0x6c17));
    let mut params = GcnParams::with_output(graph.feature_dim(), cfg.hidden_dim, c, cfg.num_layers, cfg.dropout, &mut r)?;
    let adj = graph.normalize_adjacency();
    let shapes: Vec<(usize, usize)> = params.weights.iter().map(DenseMatrix::shape).collect();
    let mut opt = AdamState::new(&shapes, cfg.learning_rate).with_weight_decay(cfg.weight_decay);

    let known = &split.known_classes;
    let mut select = DenseMatrix::zeros(c, known.len());
    for (j, &k) in known.iter().enumerate() {
        select.set(k, j, 1.0);
    }
    let n_l = split.labeled.len() as f64;
    let mut target = DenseMatrix::zeros(split.labeled.len(), known.len());
    for (row, &v) in split.labeled.iter().enumerate() {
        let pos = known
            .iter()
            .position(|&k| k == labels[v])
            .ok_or_else(|| Error::contract(format!("labeled node {v} has an unknown class")))?;
        target.set(row, pos, -1.0 / n_l);
    }
    let val_nodes = split.validation_known_nodes(labels);

    let mut best = (params.clone(), f64::NEG_INFINITY);
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut er = rng::seeded(rng::derive(cfg.seed, epoch as u64));
        let mut tape = Tape::new();
        let w = params.register(&mut tape);
        let x = tape.constant(graph.features().clone());
        let h = propagate_layers(&mut tape, &w, &adj, x, cfg.dropout, Some(&mut er))?;
        let hl = tape.slice_rows(h, &split.labeled)?;
        let sel = tape.constant(select.clone());
        let logits = tape.matmul(hl, sel)?;
        let logp = tape.row_log_softmax(logits)?;
        let t = tape.constant(target.clone());
        let picked = tape.mul(logp, t)?;
        let loss = tape.reduce_sum(picked)?;
        let g = tape.backward(loss)?;
        let grads: Vec<DenseMatrix> = w.iter().map(|&v| g.wrt(v)).collect();
        drop(tape);
        let refs: Vec<&DenseMatrix> = grads.iter().collect();
        let mut ps: Vec<&mut DenseMatrix> = params.weights.iter_mut().collect();
        opt.step(&mut ps, &refs)?;

        let pred = params.logits(&adj, graph.features())?.row_argmax();
        let acc = if val_nodes.is_empty() { 0.0 } else { accuracy_known(&pred, labels, &val_nodes)? };
        if acc > best.1 {
            best = (params.clone(), acc);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let params = best.0;
    let predictions = params.logits(&adj, graph.features())?.row_argmax();
    let outcome = RunOutcome {
        scores: score_predictions(&predictions, graph, split, true)?,
        predictions,
        trace: None,
        model: None,
    };
    Ok((outcome, params))
}

/// Trains the encoder with the infomax loss over all nodes and returns
/// eval-mode embeddings of the best epoch.
///
/// With `validation` nodes, an epoch is scored by k-means on their
/// embeddings (one cluster per class present) and matched accuracy, and
/// training stops when that score has not improved for `patience` epochs.
/// Without, the infomax loss itself is watched.
pub fn train_dgi_embeddings(graph: &Graph, cfg: &TrainConfig, validation: &[usize]) -> Result<DenseMatrix> {
    cfg.validate()?;
    let mut r = rng::seeded(rng::derive(cfg.seed, 0xd61));
    let mut params = GcnParams::new(graph.feature_dim(), cfg.hidden_dim, cfg.num_layers, cfg.dropout, &mut r)?;
    let mut disc = Discriminator::new(cfg.hidden_dim, &mut r);
    let adj = graph.normalize_adjacency();
    let mut shapes: Vec<(usize, usize)> = params.weights.iter().map(DenseMatrix::shape).collect();
    shapes.push(disc.weight.shape());
    let mut opt = AdamState::new(&shapes, cfg.learning_rate).with_weight_decay(cfg.weight_decay);
    let everyone: Vec<usize> = (0..graph.num_nodes()).collect();
    let labels = graph.labels();
    let val_k = {
        let mut c: Vec<usize> = validation.iter().map(|&v| labels[v]).collect();
        c.sort_unstable();
        c.dedup();
        c.len()
    };
    let score = |params: &GcnParams| -> Result<f64> {
        let z = params.embed(&adj, graph.features())?.select_rows(validation);
        let clusters = kmeans(&z, val_k, cfg.seed, DEFAULT_MAX_ITERS)?;
        let local: Vec<usize> = (0..validation.len()).collect();
        let truth: Vec<usize> = validation.iter().map(|&v| labels[v]).collect();
        accuracy_all(&clusters.labels, &truth, &local)
    };

    // higher is better for both criteria
    let mut best = (params.clone(), f64::NEG_INFINITY);
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut er = rng::seeded(rng::derive(cfg.seed, epoch as u64));
        let mut tape = Tape::new();
        let w = params.register(&mut tape);
        let dv = tape.param(disc.weight.clone());
        let x = tape.constant(graph.features().clone());
        let z = encode(&mut tape, &w, &adj, x, cfg.dropout, Some(&mut er))?;
        let xc = tape.constant(corrupt_with(graph.features(), &mut er));
        let zc = encode(&mut tape, &w, &adj, xc, cfg.dropout, Some(&mut er))?;
        let s = cfg.readout.apply(&mut tape, z)?;
        let loss = dgi_loss(&mut tape, &everyone, z, zc, s, dv)?;
        let value = tape.scalar(loss.var);
        let g = tape.backward(loss.var)?;
        let mut grads: Vec<DenseMatrix> = w.iter().map(|&v| g.wrt(v)).collect();
        grads.push(g.wrt(dv));
        drop(tape);
        // the loss belongs to the parameters before the step
        let before = (val_k < 2).then(|| params.clone());
        let refs: Vec<&DenseMatrix> = grads.iter().collect();
        let mut ps: Vec<&mut DenseMatrix> = params.weights.iter_mut().collect();
        ps.push(&mut disc.weight);
        opt.step(&mut ps, &refs)?;

        let (current, snapshot) = match before {
            Some(p) => (-value, p),
            None => (score(&params)?, params.clone()),
        };
        if current > best.1 {
            best = (snapshot, current);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    best.0.embed(&adj, graph.features())
}

/// Infomax embeddings of the unlabeled nodes clustered into `|Y|` groups.
pub fn run_dgi_kmeans(graph: &Graph, split: &OpenWorldSplit, cfg: &TrainConfig) -> Result<RunOutcome> {
    let z = train_dgi_embeddings(graph, cfg, &split.validation_eval_nodes(graph.labels()))?;
    let k = graph.num_classes();
    let clusters = kmeans(&z.select_rows(&split.unlabeled), k, cfg.seed, DEFAULT_MAX_ITERS)?;
    let mut predictions = vec![usize::MAX; graph.num_nodes()];
    for (&v, &c) in split.unlabeled.iter().zip(&clusters.labels) {
        predictions[v] = c;
    }
    Ok(RunOutcome {
        scores: score_predictions(&predictions, graph, split, false)?,
        predictions,
        trace: None,
        model: None,
    })
}

/// Spectral clustering with `|Y|` clusters on the whole graph.
pub fn run_spectral(graph: &Graph, split: &OpenWorldSplit, cfg: &TrainConfig) -> Result<RunOutcome> {
    let predictions = spectral_cluster(graph.adjacency(), graph.num_classes(), cfg.seed)?;
    Ok(RunOutcome {
        scores: score_predictions(&predictions, graph, split, false)?,
        predictions,
        trace: None,
        model: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, make_class_folds, open_world_split, SbmConfig, SplitMasks};

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()), Some(m));
        }
        assert_eq!(Method::parse("mlp"), None);
    }

    #[test]
    fn spectral_on_two_cliques() {
        let mut edges = Vec::new();
        for base in [0, 5] {
            for i in 0..5 {
                for j in (i + 1)..5 {
                    edges.push((base + i, base + j));
                }
            }
        }
        let labels: Vec<usize> = (0..10).map(|v| v / 5).collect();
        let g = Graph::new(DenseMatrix::zeros(10, 2), &edges, labels, 2).unwrap();
        let masks = SplitMasks::from_indices(10, &[0, 5], &[1, 6], &[2, 3, 4, 7, 8, 9]).unwrap();
        let split = OpenWorldSplit::all_known(&g, &masks).unwrap();
        let out = run_spectral(&g, &split, &TrainConfig::default()).unwrap();
        assert_eq!(out.scores.acc_all, 1.0);
        assert!(out.scores.acc_known.is_none());
    }

    #[test]
    fn gcn_new_class_weights_do_not_move() {
        let (g, m) = generate_sbm(&SbmConfig::new(180, 6, 0.1, 0.005).with_features(8, 0.5).with_seed(4)).unwrap();
        let plan = make_class_folds(6, 1.0 / 3.0, 2).unwrap();
        let split = open_world_split(&g, &m, &plan, 0, 1).unwrap();
        let cfg = TrainConfig {
            hidden_dim: 8,
            weight_decay: 0.0,
            max_epochs: 15,
            seed: 3,
            ..Default::default()
        };
        let mut r = rng::seeded(rng::derive(cfg.seed, 0x6c17));
        let init = GcnParams::with_output(8, 8, 6, 2, cfg.dropout, &mut r).unwrap();
        let (_, trained) = run_gcn_baseline(&g, &split, &cfg).unwrap();
        let last = init.weights.len() - 1;
        let new: Vec<usize> = (0..6).filter(|&c| !split.is_known(c)).collect();
        for row in 0..8 {
            for &c in &new {
                let drift = (trained.weights[last].get(row, c) - init.weights[last].get(row, c)).abs();
                assert!(drift < 1e-6);
            }
        }
        assert_ne!(trained.weights[0], init.weights[0]);
    }
}

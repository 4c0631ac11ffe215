//! The combined objective `λ L_S + μ L_U + ν L_P + κ R`, one-epoch updates
//! and early-stopped fitting.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::encoder::{corrupt_with, encode, GcnParams};
use crate::error::{Error, Result};
use crate::eval::{accuracy_all, estimate_num_classes, EstimateConfig, EstimateReport};
use crate::graph::{Graph, OpenWorldSplit, SplitMasks};
use crate::infomax::{dgi_loss, Discriminator, Readout};
use crate::prototype::{regularizer, supervised_loss, PrototypeSet, DEFAULT_TAU_PSEUDO, DEFAULT_TAU_SUPERVISED};
use crate::pseudolabel::{
    edge_weight_report, edge_weights, pseudo_label_loss, EdgeWeightReport, EntropyKeepMode, PseudoLabelConfig,
    PseudoLabelState,
};
use crate::rng;
use crate::tensor::{dot, AdamState, DenseMatrix, SparseMatrix, Tape, Var};

/// Hyperparameters; the defaults are the Cora settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
    pub kappa: f64,
    pub q: f64,
    pub tau_s: f64,
    pub tau_p: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub lp_hops: usize,
    pub seed: u64,
    pub entropy_mode: EntropyKeepMode,
    /// Number of new prototypes; `None` uses the split's new-class count.
    pub num_new_prototypes: Option<usize>,
    pub readout: Readout,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.596017,
            mu: 0.652459,
            nu: 0.763453,
            kappa: 0.208553,
            q: 0.333999,
            tau_s: DEFAULT_TAU_SUPERVISED,
            tau_p: DEFAULT_TAU_PSEUDO,
            learning_rate: 0.01,
            weight_decay: 0.001,
            dropout: 0.4,
            hidden_dim: 128,
            num_layers: 2,
            patience: 30,
            max_epochs: 1000,
            lp_hops: 2,
            seed: 0,
            entropy_mode: EntropyKeepMode::DropTopDecile,
            num_new_prototypes: None,
            readout: Readout::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [("lambda", self.lambda), ("mu", self.mu), ("nu", self.nu), ("kappa", self.kappa)];
        if let Some((name, w)) = weights.iter().find(|(_, w)| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::contract(format!("loss weight {name} = {w} must be finite and >= 0")));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::contract(format!("q = {} outside (0, 1)", self.q)));
        }
        if !(self.tau_s > 0.0) || !(self.tau_p > 0.0) {
            return Err(Error::contract("temperatures must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::contract("learning rate must be positive and weight decay >= 0"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::contract(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.hidden_dim == 0 || !(2..=3).contains(&self.num_layers) {
            return Err(Error::contract("need hidden_dim >= 1 and 2 or 3 layers"));
        }
        if self.patience == 0 {
            return Err(Error::contract("patience must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::contract("max_epochs must be at least 1"));
        }
        if self.lp_hops == 0 {
            return Err(Error::contract("lp_hops must be at least 1"));
        }
        Ok(())
    }
}

/// Values of the four objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub supervised: f64,
    pub unsupervised: f64,
    pub pseudo: f64,
    pub regularizer: f64,
}

/// `λ L_S + μ L_U + ν L_P + κ R`.
pub fn total_loss(c: &LossComponents, cfg: &TrainConfig) -> Result<f64> {
    for (op, v) in [
        ("loss_s", c.supervised),
        ("loss_u", c.unsupervised),
        ("loss_p", c.pseudo),
        ("reg", c.regularizer),
    ] {
        if !v.is_finite() {
            return Err(Error::Numeric { op });
        }
    }
    Ok(cfg.lambda * c.supervised + cfg.mu * c.unsupervised + cfg.nu * c.pseudo + cfg.kappa * c.regularizer)
}

/// One row of the training trace. Terms with a zero weight are skipped and
/// recorded as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: LossComponents,
    pub total: f64,
    pub val_acc: f64,
    pub n_candidates: usize,
    pub n_survivors: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
    /// Eval-mode edge weight statistics; epoch 0 is the initialization.
    pub edge_weights: Vec<(usize, EdgeWeightReport)>,
}

/// Encoder, discriminator and prototypes. Known prototype `i` stands for
/// class `known_classes[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PownModel {
    pub encoder: GcnParams,
    pub discriminator: Discriminator,
    pub prototypes: PrototypeSet,
    pub known_classes: Vec<usize>,
}

impl PownModel {
    pub fn new(feature_dim: usize, known_classes: &[usize], num_new: usize, cfg: &TrainConfig) -> Result<Self> {
        let mut r = rng::seeded(rng::derive(cfg.seed, 0x1417));
        let encoder = GcnParams::new(feature_dim, cfg.hidden_dim, cfg.num_layers, cfg.dropout, &mut r)?;
        let discriminator = Discriminator::new(cfg.hidden_dim, &mut r);
        let mut prototypes = PrototypeSet::random(known_classes.len(), num_new, cfg.hidden_dim, &mut r);
        prototypes.tau_supervised = cfg.tau_s;
        prototypes.tau_pseudo = cfg.tau_p;
        Ok(Self {
            encoder,
            discriminator,
            prototypes,
            known_classes: known_classes.to_vec(),
        })
    }

    /// Label per node: the nearest prototype, known ones mapped to their
    /// class and new prototype `j` (counted among the new ones) to
    /// `num_classes + j`.
    pub fn predict_from_embeddings(&self, z: &DenseMatrix, num_classes: usize) -> Vec<usize> {
        let p = &self.prototypes;
        z.row_iter()
            .map(|row| {
                let mut best = (0, f64::NEG_INFINITY);
                for i in 0..p.len() {
                    let s = dot(row, p.vectors.row(i));
                    if s > best.1 {
                        best = (i, s);
                    }
                }
                match p.known_ids.iter().position(|&k| k == best.0) {
                    Some(pos) => self.known_classes[pos],
                    None => num_classes + p.new_ids.iter().position(|&k| k == best.0).unwrap_or(0),
                }
            })
            .collect()
    }

    pub fn predict(&self, normalized_adjacency: &SparseMatrix, features: &DenseMatrix, num_classes: usize) -> Result<Vec<usize>> {
        let z = self.encoder.embed(normalized_adjacency, features)?;
        Ok(self.predict_from_embeddings(&z, num_classes))
    }
}

/// Mutable training state for one run.
pub struct Trainer<'g> {
    graph: &'g Graph,
    split: &'g OpenWorldSplit,
    adjacency: SparseMatrix,
    config: TrainConfig,
    pub model: PownModel,
    dense_opt: AdamState,
    proto_opt: AdamState,
    prototype_of_class: Vec<Option<usize>>,
    validation_nodes: Vec<usize>,
    epoch: usize,
}

impl<'g> Trainer<'g> {
    pub fn new(graph: &'g Graph, split: &'g OpenWorldSplit, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if split.labeled.is_empty() {
            return Err(Error::contract("degenerate split: no labeled nodes"));
        }
        let num_new = config.num_new_prototypes.unwrap_or(split.num_new_classes());
        let model = PownModel::new(graph.feature_dim(), &split.known_classes, num_new, &config)?;
        let mut shapes: Vec<(usize, usize)> = model.encoder.weights.iter().map(DenseMatrix::shape).collect();
        shapes.push(model.discriminator.weight.shape());
        let dense_opt = AdamState::new(&shapes, config.learning_rate).with_weight_decay(config.weight_decay);
        let proto_opt = AdamState::new(&[model.prototypes.vectors.shape()], config.learning_rate);
        let mut prototype_of_class = alloc::vec![None; graph.num_classes()];
        for (i, &c) in split.known_classes.iter().enumerate() {
            prototype_of_class[c] = Some(model.prototypes.known_ids[i]);
        }
        Ok(Self {
            graph,
            split,
            adjacency: graph.normalize_adjacency(),
            validation_nodes: split.validation_eval_nodes(graph.labels()),
            config,
            model,
            dense_opt,
            proto_opt,
            prototype_of_class,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn normalized_adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn embeddings(&self) -> Result<DenseMatrix> {
        self.model.encoder.embed(&self.adjacency, self.graph.features())
    }

    pub fn predict(&self) -> Result<Vec<usize>> {
        self.model.predict(&self.adjacency, self.graph.features(), self.graph.num_classes())
    }

    /// Matched accuracy on validation nodes of known and validation-new
    /// classes; 0 when there are none.
    pub fn validation_accuracy(&self) -> Result<f64> {
        if self.validation_nodes.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict()?;
        accuracy_all(&pred, self.graph.labels(), &self.validation_nodes)
    }

    /// Eval-mode edge weights split by ground-truth homophily.
    pub fn edge_weight_report(&self) -> Result<EdgeWeightReport> {
        let z = self.embeddings()?;
        let w = edge_weights(self.graph.adjacency(), &z, &self.model.prototypes.vectors)?;
        edge_weight_report(&w, self.graph.labels())
    }

    /// One Adam step on the full objective. On error the model and optimizer
    /// state are left as they were.
    pub fn train_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.epoch + 1;
        let mut r = rng::seeded(rng::derive(self.config.seed, epoch as u64));
        let cfg = &self.config;
        let graph = self.graph;
        let split = self.split;

        let mut tape = Tape::new();
        let weights = self.model.encoder.register(&mut tape);
        let disc = tape.param(self.model.discriminator.weight.clone());
        let proto_raw = tape.param(self.model.prototypes.vectors.clone());
        let protos = tape.row_l2_normalize(proto_raw)?;
        let x = tape.constant(graph.features().clone());
        let z = encode(&mut tape, &weights, &self.adjacency, x, cfg.dropout, Some(&mut r))?;

        let mut losses = LossComponents::default();
        let mut terms: Vec<(f64, Var)> = Vec::with_capacity(4);
        if cfg.lambda > 0.0 {
            let l = supervised_loss(
                &mut tape,
                z,
                protos,
                &self.model.prototypes,
                &split.labeled,
                graph.labels(),
                &self.prototype_of_class,
            )?;
            losses.supervised = tape.scalar(l.var);
            terms.push((cfg.lambda, l.var));
        }
        if cfg.mu > 0.0 {
            let shuffled = corrupt_with(graph.features(), &mut r);
            let xc = tape.constant(shuffled);
            let zc = encode(&mut tape, &weights, &self.adjacency, xc, cfg.dropout, Some(&mut r))?;
            let s = cfg.readout.apply(&mut tape, z)?;
            let l = dgi_loss(&mut tape, &split.unlabeled, z, zc, s, disc)?;
            losses.unsupervised = tape.scalar(l.var);
            terms.push((cfg.mu, l.var));
        }
        let state = PseudoLabelState::compute(
            graph.adjacency(),
            tape.value(z),
            tape.value(protos),
            &self.model.prototypes.known_ids,
            &self.model.prototypes.new_ids,
            &split.labeled,
            &split.unlabeled,
            &PseudoLabelConfig {
                q: cfg.q,
                hops: cfg.lp_hops,
                mode: cfg.entropy_mode,
            },
        )?;
        if cfg.nu > 0.0 && !state.survivors.is_empty() {
            let l = pseudo_label_loss(&mut tape, z, protos, &state.survivors, &state.active_prototypes, cfg.tau_p)?;
            losses.pseudo = tape.scalar(l.var);
            terms.push((cfg.nu, l.var));
        }
        if cfg.kappa > 0.0 {
            let l = regularizer(&mut tape, z, protos, cfg.tau_s)?;
            losses.regularizer = tape.scalar(l);
            terms.push((cfg.kappa, l));
        }
        let total = total_loss(&losses, cfg)?;
        let root = tape.weighted_sum(&terms)?;
        let grads = tape.backward(root)?;

        let mut dense_grads: Vec<DenseMatrix> = weights.iter().map(|&w| grads.wrt(w)).collect();
        dense_grads.push(grads.wrt(disc));
        let proto_grad = grads.wrt(proto_raw);
        if dense_grads.iter().any(|g| !g.is_finite()) || !proto_grad.is_finite() {
            return Err(Error::Numeric { op: "train_epoch" });
        }
        drop(tape);

        let saved = (self.model.clone(), self.dense_opt.clone(), self.proto_opt.clone());
        let step = (|| -> Result<()> {
            let mut params: Vec<&mut DenseMatrix> = self.model.encoder.weights.iter_mut().collect();
            params.push(&mut self.model.discriminator.weight);
            let refs: Vec<&DenseMatrix> = dense_grads.iter().collect();
            self.dense_opt.step(&mut params, &refs)?;
            self.proto_opt.step(&mut [&mut self.model.prototypes.vectors], &[&proto_grad])?;
            self.model.prototypes.renormalize();
            Ok(())
        })();
        if let Err(e) = step {
            (self.model, self.dense_opt, self.proto_opt) = saved;
            return Err(e);
        }
        self.epoch = epoch;
        let val_acc = self.validation_accuracy()?;
        Ok(EpochRecord {
            epoch,
            losses,
            total,
            val_acc,
            n_candidates: state.candidates.len(),
            n_survivors: state.survivors.len(),
        })
    }
}

/// Outcome of [`fit`]: the best-validation snapshot and the full trace.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: PownModel,
    pub trace: TrainTrace,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

/// Trains until `max_epochs` or until validation accuracy has not improved
/// for `patience` epochs, keeping the best epoch's parameters.
pub fn fit(graph: &Graph, split: &OpenWorldSplit, config: &TrainConfig) -> Result<FitResult> {
    fit_with(graph, split, config, true)
}

/// As [`fit`], optionally without the per-epoch edge weight diagnostics.
pub fn fit_with(graph: &Graph, split: &OpenWorldSplit, config: &TrainConfig, diagnostics: bool) -> Result<FitResult> {
    let mut trainer = Trainer::new(graph, split, config.clone())?;
    let mut trace = TrainTrace::default();
    if diagnostics {
        trace.edge_weights.push((0, trainer.edge_weight_report()?));
    }
    let mut best = (trainer.model.clone(), 0usize, f64::NEG_INFINITY);
    let mut stale = 0;
    for _ in 0..config.max_epochs {
        let rec = trainer.train_epoch()?;
        if diagnostics {
            trace.edge_weights.push((rec.epoch, trainer.edge_weight_report()?));
        }
        trace.records.push(rec);
        if rec.val_acc > best.2 {
            best = (trainer.model.clone(), rec.epoch, rec.val_acc);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok(FitResult {
        model: best.0,
        trace,
        best_epoch: best.1,
        best_val_acc: best.2,
    })
}

/// Class-count estimate for a split's unlabeled nodes.
///
/// The known classes are shuffled and halved into training classes and
/// probe classes. The model is fitted with only the training classes
/// labeled and without new prototypes; its embeddings then go to
/// [`estimate_num_classes`] with the labeled nodes of probe classes as the
/// probe set.
pub fn estimate_classes(
    graph: &Graph,
    masks: &SplitMasks,
    split: &OpenWorldSplit,
    config: &TrainConfig,
    estimate: &EstimateConfig,
) -> Result<EstimateReport> {
    if split.known_classes.len() < 2 {
        return Err(Error::contract("class estimation needs at least two known classes"));
    }
    let mut classes = split.known_classes.clone();
    classes.shuffle(&mut rng::seeded(rng::derive(config.seed, 0xe57)));
    let half = classes.len() / 2;
    let (probe, train) = classes.split_at(half);
    let mut train = train.to_vec();
    train.sort_unstable();
    let inner = OpenWorldSplit::with_roles(graph, masks, &train, &split.validation_new_classes)?;
    let cfg = TrainConfig {
        nu: 0.0,
        num_new_prototypes: Some(0),
        ..config.clone()
    };
    let fitted = fit_with(graph, &inner, &cfg, false)?;
    let z = fitted.model.encoder.embed(&graph.normalize_adjacency(), graph.features())?;
    let labels = graph.labels();
    let probe_nodes: Vec<usize> = split
        .labeled
        .iter()
        .copied()
        .filter(|&v| probe.contains(&labels[v]))
        .collect();
    estimate_num_classes(&z, labels, &probe_nodes, &split.unlabeled, estimate)
}

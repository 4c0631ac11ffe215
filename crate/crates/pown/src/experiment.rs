//! The (method × fold × repeat) grid and its artifacts.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use pown_core::baselines::{run_method, Method};
use pown_core::eval::{EstimateConfig, EstimateReport, MetricsReport};
use pown_core::graph::{generate_sbm, max_feasible_folds, open_world_split, SbmConfig};
use pown_core::pseudolabel::EdgeWeightReport;
use pown_core::rng;
use pown_core::trainer::{estimate_classes, TrainConfig, TrainTrace, Trainer};
use pown_core::{ClassFoldPlan, OpenWorldSplit};

use crate::config::{DatasetSpec, ExperimentPlan};
use crate::error::{Error, Result};
use crate::io::{artifact, load_dataset, Dataset};

/// Seed of one run. Distinct `(method, fold, repeat)` give distinct seeds.
pub fn run_seed(base: u64, method: Method, fold: usize, repeat: usize) -> u64 {
    let m = Method::ALL.iter().position(|&x| x == method).unwrap_or(0) as u64;
    rng::derive(rng::derive(rng::derive(base, 1 + m), fold as u64), repeat as u64)
}

/// Seed of the class-to-fold shuffle of one repeat.
pub fn fold_seed(base: u64, repeat: usize) -> u64 {
    rng::derive(rng::derive(base, 0xf01d), repeat as u64)
}

pub fn load(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    match spec {
        DatasetSpec::Dir(dir) => load_dataset(dir),
        DatasetSpec::Sbm(cfg) => {
            let (graph, masks) = generate_sbm(&cfg.clone().with_seed(seed))?;
            Ok(Dataset {
                name: spec.describe(),
                graph,
                masks,
            })
        }
    }
}

pub fn run_id(method: Method, fold: usize, repeat: usize) -> String {
    format!("{}_f{fold}_r{repeat}", method.name())
}

/// One class-count estimate.
#[derive(Debug, Clone)]
pub struct EstimateRecord {
    pub fold: usize,
    pub repeat: usize,
    pub num_classes: usize,
    pub report: EstimateReport,
}

#[derive(Debug, Default)]
pub struct ExperimentOutcome {
    pub reports: Vec<MetricsReport>,
    /// `(run id, error)` of runs that failed.
    pub failures: Vec<(String, String)>,
    pub estimates: Vec<EstimateRecord>,
}

const METRICS_HEADER: [&str; 8] = ["method", "dataset", "fold", "repeat", "acc_all", "acc_known", "acc_new", "seed"];

fn metrics_row(r: &MetricsReport) -> [String; 8] {
    [
        r.method.clone(),
        r.dataset.clone(),
        r.fold.to_string(),
        r.repeat.to_string(),
        r.acc_all.to_string(),
        r.acc_known.map_or_else(String::new, |a| a.to_string()),
        r.acc_new.to_string(),
        r.seed.to_string(),
    ]
}

/// Appends metric rows, flushing after each so a later crash cannot damage
/// rows already written.
pub struct MetricsWriter {
    inner: csv::Writer<fs::File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(METRICS_HEADER)?;
        inner.flush().map_err(|e| Error::io(path, e))?;
        Ok(Self { inner })
    }

    pub fn append(&mut self, r: &MetricsReport) -> Result<()> {
        self.inner.write_record(metrics_row(r))?;
        self.inner.flush().map_err(|e| Error::Csv(e.into()))
    }
}

// `-0` reads badly in a CSV; an empty loss term is plain 0
fn num(x: f64) -> String {
    (x + 0.0).to_string()
}

pub fn write_trace(path: &Path, trace: &TrainTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "epoch",
        "loss_s",
        "loss_u",
        "loss_p",
        "reg",
        "total",
        "val_acc",
        "n_candidates",
        "n_survivors",
    ])?;
    for r in &trace.records {
        let l = r.losses;
        w.write_record([
            r.epoch.to_string(),
            num(l.supervised),
            num(l.unsupervised),
            num(l.pseudo),
            num(l.regularizer),
            num(r.total),
            num(r.val_acc),
            r.n_candidates.to_string(),
            r.n_survivors.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_edge_weights(path: &Path, rows: &[(usize, EdgeWeightReport)]) -> Result<()> {
    let opt = |x: Option<f64>| x.map_or_else(String::new, num);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "homophilic_mean", "homophilic_std", "heterophilic_mean", "heterophilic_std"])?;
    for (epoch, r) in rows {
        w.write_record([
            epoch.to_string(),
            opt(r.homophilic.map(|s| s.mean)),
            opt(r.homophilic.map(|s| s.std)),
            opt(r.heterophilic.map(|s| s.mean)),
            opt(r.heterophilic.map(|s| s.std)),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_estimates(path: &Path, rows: &[EstimateRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fold", "repeat", "num_classes", "estimate", "k_validation", "k_silhouette", "k_hat"])?;
    for e in rows {
        let r = &e.report;
        w.write_record([e.fold, e.repeat, e.num_classes, r.estimate, r.k_validation, r.k_silhouette, r.k_hat].map(|x| x.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Mean and standard error (sample standard deviation over `√n`) of one
/// metric of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: String,
    pub metric: &'static str,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub n: usize,
}

pub const METRICS: [&str; 3] = ["acc_all", "acc_known", "acc_new"];

/// Mean and standard error; the error needs two values.
pub fn mean_stderr(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = xs.len();
    if n == 0 {
        return (None, None);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some((var / n as f64).sqrt()))
}

/// One row per method (in order of first appearance) and metric.
pub fn aggregate(reports: &[MetricsReport]) -> Vec<AggregateRow> {
    let mut methods: Vec<&str> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut rows = Vec::new();
    for m in methods {
        let runs: Vec<&MetricsReport> = reports.iter().filter(|r| r.method == m).collect();
        for metric in METRICS {
            let xs: Vec<f64> = runs
                .iter()
                .filter_map(|r| match metric {
                    "acc_all" => Some(r.acc_all),
                    "acc_known" => r.acc_known,
                    _ => Some(r.acc_new),
                })
                .collect();
            let (mean, stderr) = mean_stderr(&xs);
            rows.push(AggregateRow {
                method: m.to_string(),
                metric,
                mean,
                stderr,
                n: xs.len(),
            });
        }
    }
    rows
}

/// Writes `metrics.csv`, `aggregate.csv` and `summary.txt`. Rewriting from
/// the same reports reproduces the same bytes.
pub fn emit_report(dir: &Path, reports: &[MetricsReport]) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Config("no completed runs to report".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = MetricsWriter::create(&artifact(dir, "metrics.csv"))?;
    for r in reports {
        w.append(r)?;
    }
    let rows = aggregate(reports);
    let path = artifact(dir, "aggregate.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["method", "metric", "mean", "stderr", "n"])?;
    let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
    for r in &rows {
        w.write_record([r.method.clone(), r.metric.to_string(), opt(r.mean), opt(r.stderr), r.n.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let path = artifact(dir, "summary.txt");
    fs::write(&path, summary_table(&rows)).map_err(|e| Error::io(&path, e))
}

/// Percentages as `mean ± stderr`, columns method, acc_all, acc_known,
/// acc_new.
pub fn summary_table(rows: &[AggregateRow]) -> String {
    let cell = |r: Option<&AggregateRow>| match r {
        Some(AggregateRow { mean: Some(m), stderr, .. }) => {
            format!("{:.2} ± {:.2}", 100.0 * m, 100.0 * stderr.unwrap_or(0.0))
        }
        _ => "-".to_string(),
    };
    let mut out = format!("{:<12} {:>16} {:>16} {:>16}\n", "method", "acc_all", "acc_known", "acc_new");
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.dedup();
    for m in methods {
        let get = |metric: &str| rows.iter().find(|r| r.method == m && r.metric == metric);
        out.push_str(&format!(
            "{:<12} {:>16} {:>16} {:>16}\n",
            m,
            cell(get("acc_all")),
            cell(get("acc_known")),
            cell(get("acc_new"))
        ));
    }
    out
}

/// Runs the whole grid. Failed runs are logged and recorded; the others
/// continue. Configuration problems (unloadable data, impossible folds)
/// abort with an error before any run.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentOutcome> {
    let data = load(&plan.dataset, plan.seed).map_err(|e| Error::Config(format!("dataset: {e}")))?;
    let (graph, masks) = (&data.graph, &data.masks);
    let num_folds = max_feasible_folds(graph.num_classes(), plan.new_class_ratio);
    if num_folds < 2 {
        return Err(Error::Config(format!(
            "{} classes are too few for two class folds",
            graph.num_classes()
        )));
    }
    let folds = plan.folds.resolve(num_folds)?;
    fs::create_dir_all(&plan.out).map_err(|e| Error::io(&plan.out, e))?;
    info!(
        "{}: {} nodes, {} edges, {} classes, {num_folds} folds",
        data.name,
        graph.num_nodes(),
        graph.num_edges(),
        graph.num_classes()
    );

    let mut metrics = MetricsWriter::create(&artifact(&plan.out, "metrics.csv"))?;
    let mut outcome = ExperimentOutcome::default();
    for repeat in 0..plan.repeats {
        let fold_plan = ClassFoldPlan::new(graph.num_classes(), num_folds, fold_seed(plan.seed, repeat))
            .map_err(|e| Error::Config(e.to_string()))?;
        for &fold in &folds {
            let val_fold = (fold + 1) % num_folds;
            let split = open_world_split(graph, masks, &fold_plan, fold, val_fold)?;
            let mut train = plan.train.clone();
            if plan.estimate_classes {
                match estimate_for(&data, &split, plan, fold, repeat) {
                    Ok(rec) => {
                        let new = rec.report.estimate.saturating_sub(split.known_classes.len()).max(1);
                        info!("fold {fold} repeat {repeat}: estimated {} classes", rec.report.estimate);
                        train.num_new_prototypes = Some(new);
                        outcome.estimates.push(rec);
                    }
                    Err(e) => {
                        warn!("class estimation failed on fold {fold} repeat {repeat}: {e}");
                        outcome.failures.push((format!("estimate_f{fold}_r{repeat}"), e.to_string()));
                    }
                }
            }
            for &method in &plan.methods {
                let id = run_id(method, fold, repeat);
                let seed = run_seed(plan.seed, method, fold, repeat);
                let cfg = TrainConfig { seed, ..train.clone() };
                let start = Instant::now();
                match run_single(method, &data, &split, &cfg, &plan.out, &id) {
                    Ok(scores) => {
                        let report = MetricsReport {
                            method: method.name().to_string(),
                            dataset: data.name.clone(),
                            fold,
                            repeat,
                            acc_all: scores.acc_all,
                            acc_known: scores.acc_known,
                            acc_new: scores.acc_new,
                            seed,
                        };
                        info!(
                            "{id}: all {:.4} known {} new {:.4} ({:.1}s)",
                            report.acc_all,
                            report.acc_known.map_or_else(|| "-".into(), |a| format!("{a:.4}")),
                            report.acc_new,
                            start.elapsed().as_secs_f64()
                        );
                        metrics.append(&report)?;
                        outcome.reports.push(report);
                    }
                    Err(e) => {
                        warn!("{id} failed: {e}");
                        outcome.failures.push((id, e.to_string()));
                    }
                }
            }
        }
    }
    drop(metrics);
    if !outcome.estimates.is_empty() {
        write_estimates(&artifact(&plan.out, "estimates.csv"), &outcome.estimates)?;
    }
    if !outcome.reports.is_empty() {
        emit_report(&plan.out, &outcome.reports)?;
    }
    Ok(outcome)
}

fn run_single(
    method: Method,
    data: &Dataset,
    split: &OpenWorldSplit,
    cfg: &TrainConfig,
    out: &Path,
    id: &str,
) -> Result<pown_core::baselines::Scores> {
    let result = run_method(method, &data.graph, split, cfg)?;
    if let Some(trace) = &result.trace {
        write_trace(&artifact(out, &format!("trace_{id}.csv")), trace)?;
        if !trace.edge_weights.is_empty() {
            write_edge_weights(&artifact(out, &format!("edge_weights_{id}.csv")), &trace.edge_weights)?;
        }
    }
    Ok(result.scores)
}

fn estimate_for(
    data: &Dataset,
    split: &OpenWorldSplit,
    plan: &ExperimentPlan,
    fold: usize,
    repeat: usize,
) -> Result<EstimateRecord> {
    let seed = rng::derive(run_seed(plan.seed, Method::Pown, fold, repeat), 0xe5);
    let cfg = TrainConfig {
        seed,
        ..plan.train.clone()
    };
    let est = EstimateConfig {
        k_max: plan.k_max,
        seed,
        ..EstimateConfig::default()
    };
    let report = estimate_classes(&data.graph, &data.masks, split, &cfg, &est)?;
    Ok(EstimateRecord {
        fold,
        repeat,
        num_classes: data.graph.num_classes(),
        report,
    })
}

/// Epoch timings of the linear-scaling probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    /// Fastest observed seconds per training epoch (least disturbed by
    /// other load on the machine).
    pub seconds: Vec<f64>,
}

impl ScalingReport {
    /// Time ratio between consecutive sizes.
    pub fn ratios(&self) -> Vec<f64> {
        self.seconds.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// Times training epochs on SBM graphs of `sizes` nodes at a fixed expected
/// degree, so nodes and edges double together.
pub fn scaling_probe(sizes: &[usize], train: &TrainConfig, seed: u64, epochs: usize) -> Result<ScalingReport> {
    const CLASSES: usize = 6;
    let mut report = ScalingReport {
        nodes: Vec::new(),
        edges: Vec::new(),
        seconds: Vec::new(),
    };
    for &n in sizes {
        // about 8 same-class and 2 cross-class neighbours per node
        let p_in = 8.0 * CLASSES as f64 / n as f64;
        let p_out = 2.0 * CLASSES as f64 / ((CLASSES - 1) * n) as f64;
        let (graph, masks) = generate_sbm(&SbmConfig::new(n, CLASSES, p_in, p_out).with_seed(seed))?;
        let plan = ClassFoldPlan::new(CLASSES, 3, seed)?;
        let split = open_world_split(&graph, &masks, &plan, 0, 1)?;
        let cfg = TrainConfig {
            seed,
            ..train.clone()
        };
        let mut trainer = Trainer::new(&graph, &split, cfg)?;
        trainer.train_epoch()?; // warm-up
        let mut times = Vec::with_capacity(epochs);
        for _ in 0..epochs.max(1) {
            let start = Instant::now();
            trainer.train_epoch()?;
            times.push(start.elapsed().as_secs_f64());
        }
        report.nodes.push(n);
        report.edges.push(graph.num_edges());
        report.seconds.push(times.iter().copied().fold(f64::INFINITY, f64::min));
    }
    Ok(report)
}

pub fn write_scaling(path: &Path, r: &ScalingReport) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut body = String::from("nodes,edges,seconds_per_epoch,ratio\n");
    for i in 0..r.nodes.len() {
        let ratio = if i == 0 { String::new() } else { (r.seconds[i] / r.seconds[i - 1]).to_string() };
        body.push_str(&format!("{},{},{},{}\n", r.nodes[i], r.edges[i], r.seconds[i], ratio));
    }
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

//! Flat `key = value` configuration shared by config files and CLI flags.

use std::path::PathBuf;
use std::str::FromStr;

use pown_core::baselines::Method;
use pown_core::graph::SbmConfig;
use pown_core::pseudolabel::EntropyKeepMode;
use pown_core::infomax::Readout;
use pown_core::trainer::TrainConfig;

use crate::error::{Error, Result};

/// Where the graph comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Dir(PathBuf),
    Sbm(SbmConfig),
}

impl DatasetSpec {
    /// `sbm:<n>,<classes>,<p_in>,<p_out>[,<feature_dim>,<feature_noise>]` or
    /// a directory path.
    pub fn parse(s: &str) -> Result<Self> {
        let Some(rest) = s.strip_prefix("sbm:") else {
            return Ok(Self::Dir(PathBuf::from(s)));
        };
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        let (n, c, p_in, p_out, features) = match parts[..] {
            [n, c, p_in, p_out, ref rest @ ..] => (n, c, p_in, p_out, rest),
            _ => {
                return Err(Error::Config(format!(
                    "`{s}`: expected sbm:<n>,<classes>,<p_in>,<p_out>[,<feature_dim>,<feature_noise>]"
                )))
            }
        };
        let cfg = SbmConfig::new(
            value(n, "sbm nodes")?,
            value(c, "sbm classes")?,
            value(p_in, "sbm p_in")?,
            value(p_out, "sbm p_out")?,
        );
        match *features {
            [] => Ok(Self::Sbm(cfg)),
            [d, noise] => Ok(Self::Sbm(cfg.with_features(value(d, "sbm feature_dim")?, value(noise, "sbm feature_noise")?))),
            _ => Err(Error::Config(format!("`{s}`: give both feature_dim and feature_noise or neither"))),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Dir(p) => p.display().to_string(),
            Self::Sbm(c) => format!(
                "sbm:{},{},{},{},{},{}",
                c.num_nodes, c.num_classes, c.p_in, c.p_out, c.feature_dim, c.feature_noise
            ),
        }
    }
}

/// Which test folds to run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FoldSelection {
    All,
    List(Vec<usize>),
}

impl FoldSelection {
    pub fn parse(s: &str) -> Result<Self> {
        if s.trim() == "all" {
            return Ok(Self::All);
        }
        let folds = s
            .split(',')
            .map(|t| value::<usize>(t.trim(), "fold index"))
            .collect::<Result<Vec<_>>>()?;
        if folds.is_empty() {
            return Err(Error::Config("empty fold list".into()));
        }
        Ok(Self::List(folds))
    }

    pub fn resolve(&self, num_folds: usize) -> Result<Vec<usize>> {
        match self {
            Self::All => Ok((0..num_folds).collect()),
            Self::List(l) => {
                if let Some(&f) = l.iter().find(|&&f| f >= num_folds) {
                    return Err(Error::Config(format!("fold {f} out of range for {num_folds} folds")));
                }
                Ok(l.clone())
            }
        }
    }
}

/// Everything one invocation runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub dataset: DatasetSpec,
    pub methods: Vec<Method>,
    /// Share of classes per fold; the fold count is `round(1/r)`, capped
    /// so each fold keeps two classes.
    pub new_class_ratio: f64,
    pub folds: FoldSelection,
    pub repeats: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Training settings; the seed inside is replaced per run.
    pub train: TrainConfig,
    pub estimate_classes: bool,
    pub k_max: usize,
}

/// A plan under construction; `dataset` is the only setting without a
/// default.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanBuilder {
    pub dataset: Option<DatasetSpec>,
    pub methods: Vec<Method>,
    pub new_class_ratio: f64,
    pub folds: FoldSelection,
    pub repeats: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub train: TrainConfig,
    pub estimate_classes: bool,
    pub k_max: usize,
}

impl Default for PlanBuilder {
    fn default() -> Self {
        Self {
            dataset: None,
            methods: vec![Method::Pown],
            new_class_ratio: 0.2,
            folds: FoldSelection::All,
            repeats: 1,
            seed: 0,
            out: PathBuf::from("out"),
            train: TrainConfig::default(),
            estimate_classes: false,
            k_max: 10,
        }
    }
}

fn value<T: FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid {what} `{s}`")))
}

fn boolean(s: &str, what: &str) -> Result<bool> {
    match s.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid {what} `{s}` (expected true/false)"))),
    }
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let mut methods = Vec::new();
    for name in s.split(',').map(str::trim) {
        let m = Method::parse(name).ok_or_else(|| {
            Error::Config(format!("unknown method `{name}` (pown, gcn, dgi-kmeans, spectral)"))
        })?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    Ok(methods)
}

impl PlanBuilder {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "dataset" => self.dataset = Some(DatasetSpec::parse(raw.trim())?),
            "method" | "methods" => self.methods = parse_methods(raw)?,
            "new_class_ratio" => self.new_class_ratio = value(raw, key)?,
            "folds" => self.folds = FoldSelection::parse(raw)?,
            "repeats" => self.repeats = value(raw, key)?,
            "seed" => self.seed = value(raw, key)?,
            "out" => self.out = PathBuf::from(raw.trim()),
            "estimate_classes" => self.estimate_classes = boolean(raw, key)?,
            "k_max" => self.k_max = value(raw, key)?,
            "lambda" => t.lambda = value(raw, key)?,
            "mu" => t.mu = value(raw, key)?,
            "nu" => t.nu = value(raw, key)?,
            "kappa" => t.kappa = value(raw, key)?,
            "q" => t.q = value(raw, key)?,
            "tau_s" => t.tau_s = value(raw, key)?,
            "tau_p" => t.tau_p = value(raw, key)?,
            "learning_rate" => t.learning_rate = value(raw, key)?,
            "weight_decay" => t.weight_decay = value(raw, key)?,
            "dropout" => t.dropout = value(raw, key)?,
            "hidden_dim" => t.hidden_dim = value(raw, key)?,
            "num_layers" => t.num_layers = value(raw, key)?,
            "patience" => t.patience = value(raw, key)?,
            "max_epochs" => t.max_epochs = value(raw, key)?,
            "lp_hops" => t.lp_hops = value(raw, key)?,
            "entropy_keep_mode" => {
                t.entropy_mode = EntropyKeepMode::parse(raw.trim()).ok_or_else(|| {
                    Error::Config(format!(
                        "invalid entropy_keep_mode `{raw}` (drop_top_decile, keep_bottom_decile)"
                    ))
                })?
            }
            "num_new_prototypes" => t.num_new_prototypes = Some(value(raw, key)?),
            "readout" => {
                t.readout = match raw.trim() {
                    "sigmoid_mean" => Readout::SigmoidMean,
                    "mean" => Readout::Mean,
                    _ => return Err(Error::Config(format!("invalid readout `{raw}` (sigmoid_mean, mean)"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of a config text. Blank lines and
    /// `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(key.trim(), raw)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip(e))))?;
        }
        Ok(())
    }

    pub fn build(self) -> Result<ExperimentPlan> {
        let dataset = self
            .dataset
            .ok_or_else(|| Error::Config("missing required `dataset`".into()))?;
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if !(self.new_class_ratio > 0.0 && self.new_class_ratio <= 0.5) {
            return Err(Error::Config(format!(
                "new_class_ratio {} outside (0, 0.5]",
                self.new_class_ratio
            )));
        }
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(ExperimentPlan {
            dataset,
            methods: self.methods,
            new_class_ratio: self.new_class_ratio,
            folds: self.folds,
            repeats: self.repeats,
            seed: self.seed,
            out: self.out,
            train: self.train,
            estimate_classes: self.estimate_classes,
            k_max: self.k_max,
        })
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// A complete plan from config text alone.
pub fn parse_config(text: &str) -> Result<ExperimentPlan> {
    let mut b = PlanBuilder::default();
    b.apply_text(text)?;
    b.build()
}

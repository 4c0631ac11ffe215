use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::error;
use pown::config::PlanBuilder;
use pown::experiment::{run_experiment, scaling_probe, write_scaling};
use pown::Error;

/// Open-world node classification experiments.
#[derive(Debug, Parser)]
#[command(name = "pown", version)]
struct Cli {
    /// `key = value` config file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory or `sbm:<n>,<classes>,<p_in>,<p_out>[,<feature_dim>,<feature_noise>]`.
    #[arg(long)]
    dataset: Option<String>,
    /// Comma-separated: pown, gcn, dgi-kmeans, spectral.
    #[arg(long)]
    method: Option<String>,
    /// `all` or comma-separated test fold indices.
    #[arg(long)]
    folds: Option<String>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Estimate the class count per fold and size the new prototypes by it.
    #[arg(long)]
    estimate_classes: bool,
    /// Time one epoch at 1k, 2k and 4k synthetic nodes instead of running
    /// the grid.
    #[arg(long)]
    scaling_probe: bool,
    /// drop_top_decile or keep_bottom_decile.
    #[arg(long)]
    entropy_keep_mode: Option<String>,
}

fn builder(cli: &Cli) -> Result<PlanBuilder, Error> {
    let mut b = PlanBuilder::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        b.apply_text(&text)?;
    }
    let flags = [
        ("dataset", cli.dataset.clone()),
        ("methods", cli.method.clone()),
        ("folds", cli.folds.clone()),
        ("repeats", cli.repeats.map(|r| r.to_string())),
        ("seed", cli.seed.map(|s| s.to_string())),
        ("out", cli.out.as_ref().map(|p| p.display().to_string())),
        ("entropy_keep_mode", cli.entropy_keep_mode.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            b.set(key, &v).map_err(|e| Error::Config(format!("--{}: {e}", key.replace('_', "-"))))?;
        }
    }
    if cli.estimate_classes {
        b.estimate_classes = true;
    }
    Ok(b)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // bad flags are configuration errors too; --help and --version are not
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    let b = match builder(&cli) {
        Ok(b) => b,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(1);
        }
    };

    if cli.scaling_probe {
        if let Err(e) = b.train.validate() {
            error!("{e}");
            return ExitCode::from(1);
        }
        return match scaling_probe(&[1000, 2000, 4000], &b.train, b.seed, 7) {
            Ok(r) => {
                for i in 0..r.nodes.len() {
                    println!("n={:<5} |E|={:<6} {:.4}s/epoch", r.nodes[i], r.edges[i], r.seconds[i]);
                }
                for (i, ratio) in r.ratios().iter().enumerate() {
                    println!("ratio {}→{}: {ratio:.3}", r.nodes[i], r.nodes[i + 1]);
                }
                let written = std::fs::create_dir_all(&b.out)
                    .map_err(|e| Error::Config(e.to_string()))
                    .and_then(|_| write_scaling(&b.out.join("scaling.csv"), &r));
                if let Err(e) = written {
                    error!("{e}");
                    return ExitCode::from(2);
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                error!("scaling probe failed: {e}");
                ExitCode::from(2)
            }
        };
    }

    let plan = match b.build() {
        Ok(p) => p,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(1);
        }
    };
    match run_experiment(&plan) {
        Ok(outcome) => {
            if let Ok(s) = std::fs::read_to_string(plan.out.join("summary.txt")) {
                print!("{s}");
            }
            if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                error!("{} of the runs failed", outcome.failures.len());
                ExitCode::from(2)
            }
        }
        Err(e) if e.is_config() => {
            error!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}

//! fedsim: deterministic personalized federated learning simulator.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

// Negated float comparisons in validation (`!(x > 0.0)`) are deliberate:
// they reject NaN, which the suggested `x <= 0.0` would wave through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, Overrides};

#[derive(Parser)]
#[command(name = "fedsim", version, about = "Deterministic personalized federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics, summary, and checkpoint.
    Run(RunArgs),
    /// Run a strategy x seed grid on identical partitions and tabulate it.
    Compare(CompareArgs),
}

/// Flags mirror the configuration keys; any flag overrides the file value.
#[derive(Args)]
struct CommonArgs {
    /// Configuration file (key = value with [sections]).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Number of clients N.
    #[arg(long)]
    clients: Option<usize>,
    /// Per-round client sampling rate r in (0, 1].
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Communication rounds T.
    #[arg(long)]
    rounds: Option<usize>,
    /// Inner epochs tau per sampled client.
    #[arg(long)]
    inner_epochs: Option<usize>,
    /// Inner-loop learning rate.
    #[arg(long)]
    inner_lr: Option<f64>,
    /// Outer-loop learning rate.
    #[arg(long)]
    outer_lr: Option<f64>,
    /// Constraint weight for fedec / fedec_l2.
    #[arg(long)]
    alpha: Option<f64>,
    /// fedec, fedec_l2, fedec_wo, fedavg, or perfedavg_fo.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Master seed; every random stream derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Support fraction for perfedavg_fo batches.
    #[arg(long)]
    support_fraction: Option<f64>,
    /// Evaluate the full population every round.
    #[arg(long)]
    evaluate_all: bool,

    /// Dataset source: synthetic or csv.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    dataset_seed: Option<u64>,
    /// CSV file with label,feature,... rows.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Divide CSV features by this value to scale into [0, 1].
    #[arg(long)]
    csv_max_value: Option<f64>,

    /// Distinct-or-repeated classes allocated per client.
    #[arg(long)]
    classes_per_client: Option<usize>,
    #[arg(long)]
    partition_seed: Option<u64>,
    #[arg(long)]
    train_fraction: Option<f64>,

    /// Hidden layer widths, comma separated (or `none`).
    #[arg(long)]
    hidden: Option<String>,

    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Checkpoint phi every this many rounds (0 = final only).
    #[arg(long)]
    checkpoint_interval: Option<usize>,
    /// Append per-round mean hidden activations per sampled client.
    #[arg(long)]
    dump_embeddings: bool,
    #[arg(long)]
    embedding_layer: Option<usize>,
    /// Write measured wall-clock seconds into metrics.csv (off by default so
    /// reruns are byte-identical).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated strategies to compare.
    #[arg(long, required = true)]
    strategies: String,
    /// Comma-separated master seeds.
    #[arg(long, required = true)]
    seeds: String,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::default();
        o.set("round.clients", self.clients.map(|v| v.to_string()));
        o.set("round.sample_rate", self.sample_rate.map(|v| v.to_string()));
        o.set("round.rounds", self.rounds.map(|v| v.to_string()));
        o.set("round.inner_epochs", self.inner_epochs.map(|v| v.to_string()));
        o.set("round.inner_lr", self.inner_lr.map(|v| v.to_string()));
        o.set("round.outer_lr", self.outer_lr.map(|v| v.to_string()));
        o.set("round.alpha", self.alpha.map(|v| v.to_string()));
        o.set("round.strategy", self.strategy.clone());
        o.set("round.batch_size", self.batch_size.map(|v| v.to_string()));
        o.set("round.seed", self.seed.map(|v| v.to_string()));
        o.set(
            "round.support_fraction",
            self.support_fraction.map(|v| v.to_string()),
        );
        o.set_flag("round.evaluate_all", self.evaluate_all);

        o.set("dataset.source", self.dataset.clone());
        o.set("dataset.classes", self.classes.map(|v| v.to_string()));
        o.set("dataset.dim", self.dim.map(|v| v.to_string()));
        o.set("dataset.per_class", self.per_class.map(|v| v.to_string()));
        o.set("dataset.separation", self.separation.map(|v| v.to_string()));
        o.set("dataset.seed", self.dataset_seed.map(|v| v.to_string()));
        o.set(
            "dataset.csv_path",
            self.csv.as_ref().map(|p| p.display().to_string()),
        );
        o.set(
            "dataset.csv_max_value",
            self.csv_max_value.map(|v| v.to_string()),
        );

        o.set(
            "partition.classes_per_client",
            self.classes_per_client.map(|v| v.to_string()),
        );
        o.set("partition.seed", self.partition_seed.map(|v| v.to_string()));
        o.set(
            "partition.train_fraction",
            self.train_fraction.map(|v| v.to_string()),
        );

        o.set("network.hidden", self.hidden.clone());

        o.set(
            "output.dir",
            self.output_dir.as_ref().map(|p| p.display().to_string()),
        );
        o.set(
            "output.checkpoint_interval",
            self.checkpoint_interval.map(|v| v.to_string()),
        );
        o.set_flag("output.dump_embeddings", self.dump_embeddings);
        o.set(
            "output.embedding_layer",
            self.embedding_layer.map(|v| v.to_string()),
        );
        o.set_flag("output.timing", self.timing);
        o
    }

    fn resolve(&self) -> Result<config::ExperimentConfig, ConfigError> {
        let file_text = match &self.config {
            Some(path) => Some(std::fs::read_to_string(path).map_err(|e| ConfigError {
                key: None,
                message: format!("cannot read {}: {e}", path.display()),
            })?),
            None => None,
        };
        config::resolve(file_text.as_deref(), &self.overrides())
    }
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>, ConfigError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>().map_err(|_| ConfigError {
                key: None,
                message: format!("bad {what} `{s}`"),
            })
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => match args.common.resolve() {
            Err(e) => return config_failure(&e),
            Ok(config) => commands::run(&config),
        },
        Command::Compare(args) => {
            let config = match args.common.resolve() {
                Err(e) => return config_failure(&e),
                Ok(c) => c,
            };
            let strategies = match parse_list::<String>(&args.strategies, "strategy") {
                Err(e) => return config_failure(&e),
                Ok(s) => s,
            };
            let seeds = match parse_list::<u64>(&args.seeds, "seed") {
                Err(e) => return config_failure(&e),
                Ok(s) => s,
            };
            commands::compare(&config, &strategies, &seeds)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: runtime: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn config_failure(e: &ConfigError) -> ExitCode {
    eprintln!("error: config: {e}");
    ExitCode::from(1)
}

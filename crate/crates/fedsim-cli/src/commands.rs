//! The `run` and `compare` commands.

use std::path::Path;

use anyhow::{Context, Result};
use serde_json::json;

use fedsim::datagen::{load_csv, shard_partition, synth_mixture, Partition, PartitionSpec};
use fedsim::nncore::NetworkSpec;
use fedsim::orchestrator::{
    dump_embeddings, run_experiment_with, ExecMode, ExperimentOutcome, MetricsRecord,
};
use fedsim::seeds;
use fedsim::strategies::StrategyKind;

use crate::config::{DatasetSource, ExperimentConfig};

fn build_partition(config: &ExperimentConfig, master_seed: u64) -> Result<(Partition, usize)> {
    let dataset = match &config.dataset {
        DatasetSource::Synthetic {
            classes,
            dim,
            per_class,
            separation,
            seed,
        } => synth_mixture(
            *classes,
            *dim,
            *per_class,
            *separation,
            seed.unwrap_or_else(|| seeds::dataset_seed(master_seed)),
        )?,
        DatasetSource::Csv {
            path,
            classes,
            max_value,
        } => load_csv(path, *classes, *max_value)
            .with_context(|| format!("loading {}", path.display()))?,
    };
    let feature_dim = dataset.feature_dim();
    let spec = PartitionSpec::new(
        config.round.clients,
        config.classes_per_client,
        config
            .partition_seed
            .unwrap_or_else(|| seeds::partition_seed(master_seed)),
    )
    .with_train_fraction(config.train_fraction);
    Ok((shard_partition(&dataset, &spec)?, feature_dim))
}

fn network(config: &ExperimentConfig, feature_dim: usize) -> Result<NetworkSpec> {
    Ok(NetworkSpec::from_dims(
        feature_dim,
        &config.hidden,
        config.dataset.classes(),
    )?)
}

/// Mean accuracy over the last (up to) 10 round records, final evaluation
/// excluded.
fn final10_accuracy(records: &[MetricsRecord]) -> f64 {
    let rounds = records.len().saturating_sub(1);
    let window = rounds.min(10);
    records[rounds - window..rounds]
        .iter()
        .map(|r| r.mean_accuracy)
        .sum::<f64>()
        / window as f64
}

fn run_one(
    config: &ExperimentConfig,
    partition: &Partition,
    net: &NetworkSpec,
    out_dir: Option<&Path>,
) -> Result<ExperimentOutcome> {
    let round = &config.round;
    let outcome = run_experiment_with(
        net,
        round,
        &partition.shards,
        ExecMode::Parallel,
        |snapshot| {
            if let Some(dir) = out_dir {
                let interval = config.checkpoint_interval;
                if interval > 0 && snapshot.round % interval == 0 && snapshot.round < round.rounds
                {
                    snapshot
                        .state
                        .phi
                        .save(&dir.join(format!("checkpoint_round_{}.txt", snapshot.round)))?;
                }
                if config.dump_embeddings {
                    for (id, result) in snapshot.sampled_results {
                        dump_embeddings(
                            net,
                            &result.adapted,
                            &partition.shards[*id],
                            config.embedding_layer,
                            snapshot.round,
                            &dir.join("embeddings.csv"),
                        )?;
                    }
                }
            }
            Ok(())
        },
    )?;
    if let Some(dir) = out_dir {
        fedsim::orchestrator::write_metrics_csv(&outcome.records, &dir.join("metrics.csv"), config.timing)?;
    }
    Ok(outcome)
}

/// Run a single experiment and persist metrics, summary, and checkpoint.
pub fn run(config: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating {}", config.output_dir.display()))?;
    let dir = config.output_dir.clone();

    std::fs::write(dir.join("config.ini"), config.to_ini())?;

    let (partition, feature_dim) = build_partition(config, config.round.seed)?;
    std::fs::write(dir.join("partition_summary.json"), partition.summary.to_json())?;

    let net = network(config, feature_dim)?;
    let outcome = run_one(config, &partition, &net, Some(&dir))?;

    outcome.final_phi.save(&dir.join("params.txt"))?;

    let final_record = outcome.records.last().expect("final record exists");
    let summary = json!({
        "config": config.to_json(),
        "rounds": config.round.rounds,
        "mean_final10_acc": final10_accuracy(&outcome.records),
        "final_personalized_acc": final_record.mean_accuracy,
        "final_per_client_accuracy": final_record.per_client_accuracy,
        "per_round_seconds": outcome.records.iter().map(|r| r.seconds).collect::<Vec<_>>(),
        "partition_hash": format!("{:016x}", partition.summary.stable_hash()),
    });
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;

    println!(
        "{}: {} rounds done; final-10 mean accuracy {:.4}, personalized accuracy {:.4}; outputs in {}",
        config.round.strategy.name(),
        config.round.rounds,
        final10_accuracy(&outcome.records),
        final_record.mean_accuracy,
        dir.display()
    );
    Ok(())
}

fn strategy_for(name: &str, base: &ExperimentConfig) -> Result<StrategyKind> {
    let alpha = base.round.strategy.alpha();
    let alpha = if alpha > 0.0 { alpha } else { 1.0 };
    Ok(match name {
        "fedec" => StrategyKind::FedEc { alpha },
        "fedec_l2" => StrategyKind::FedEcL2 { alpha },
        "fedec_wo" => StrategyKind::FedEcWo,
        "fedavg" => StrategyKind::FedAvg,
        "perfedavg_fo" => StrategyKind::PerFedAvgFo { support_fraction: 0.5 },
        other => anyhow::bail!("unknown strategy `{other}` in --strategies"),
    })
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Run the strategy x seed cross-product on identical per-seed partitions and
/// emit a comparison table.
pub fn compare(config: &ExperimentConfig, strategies: &[String], seeds: &[u64]) -> Result<()> {
    anyhow::ensure!(!strategies.is_empty(), "need at least one strategy");
    anyhow::ensure!(!seeds.is_empty(), "need at least one seed");
    std::fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating {}", config.output_dir.display()))?;
    let dir = config.output_dir.clone();
    std::fs::write(dir.join("config.ini"), config.to_ini())?;

    let mut runs = Vec::new();
    let mut per_strategy: Vec<(String, Vec<f64>, Vec<f64>)> = strategies
        .iter()
        .map(|s| (s.clone(), Vec::new(), Vec::new()))
        .collect();

    for &seed in seeds {
        // Data and partition depend only on the seed, never on the strategy,
        // so every strategy sees the identical federation.
        let mut seed_config = config.clone();
        seed_config.round.seed = seed;
        let (partition, feature_dim) = build_partition(&seed_config, seed)?;
        let net = network(&seed_config, feature_dim)?;
        let partition_hash = format!("{:016x}", partition.summary.stable_hash());

        for (i, name) in strategies.iter().enumerate() {
            let mut run_config = seed_config.clone();
            run_config.round.strategy = strategy_for(name, config)?;
            run_config.round.validate().map_err(anyhow::Error::from)?;

            let run_dir = dir.join("runs").join(format!("{name}-s{seed}"));
            std::fs::create_dir_all(&run_dir)?;
            let outcome = run_one(&run_config, &partition, &net, Some(&run_dir))?;

            let final10 = final10_accuracy(&outcome.records);
            let personalized = outcome.records.last().expect("final record").mean_accuracy;
            per_strategy[i].1.push(final10);
            per_strategy[i].2.push(personalized);
            runs.push(json!({
                "strategy": name,
                "seed": seed,
                "partition_hash": partition_hash,
                "final10_acc": final10,
                "final_personalized_acc": personalized,
            }));
            println!("{name} seed {seed}: final10 {final10:.4}, personalized {personalized:.4}");
        }
    }

    let mut csv = String::from(
        "strategy,mean_final10_acc,std_final10_acc,mean_final_personalized_acc,std_final_personalized_acc,seeds\n",
    );
    let mut strategy_json = serde_json::Map::new();
    for (name, final10s, personalized) in &per_strategy {
        let (m10, s10) = mean_and_std(final10s);
        let (mp, sp) = mean_and_std(personalized);
        csv.push_str(&format!("{name},{m10},{s10},{mp},{sp},{}\n", seeds.len()));
        strategy_json.insert(
            name.clone(),
            json!({
                "mean_final10_acc": m10,
                "std": s10,
                "final_personalized_acc": mp,
            }),
        );
    }
    std::fs::write(dir.join("comparison.csv"), &csv)?;
    let summary = json!({
        "config": config.to_json(),
        "per_strategy": strategy_json,
        "runs": runs,
    });
    std::fs::write(
        dir.join("comparison.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    print!("{csv}");
    Ok(())
}

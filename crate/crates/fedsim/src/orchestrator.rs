//! The T-round federated training loop.
//!
//! Each round samples clients, runs their inner updates in parallel over a
//! read-only snapshot of (phi, histories, shards), aggregates at the barrier,
//! then overwrites the sampled clients' stored models with their fresh
//! adaptations. All per-round randomness derives from the master seed mixed
//! with the round index (and client id), so parallel execution is
//! bit-identical to serial execution and a whole experiment is a pure
//! function of (config, shards).

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::ClientShard;
use crate::error::{Error, Result};
use crate::nncore::{forward_hidden, NetworkSpec, ParamVector};
use crate::seeds;
use crate::strategies::{
    inner_update, outer_update_fedavg, outer_update_reptile, update_history, HistoryStore,
    InnerResult, StrategyKind,
};

/// All hyperparameters of the training loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    /// Number of clients N.
    pub clients: usize,
    /// Sampling rate r in (0, 1]; each round trains ceil(r * N) clients.
    pub sample_rate: f64,
    /// Communication rounds T.
    pub rounds: usize,
    /// Inner epochs tau over a client's train split.
    pub inner_epochs: usize,
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub batch_size: usize,
    pub strategy: StrategyKind,
    /// Master seed; every stream in the run derives from it.
    pub seed: u64,
    /// Evaluate the full population from the freshly aggregated parameters
    /// each round instead of reporting the sampled clients' adaptations.
    pub evaluate_all: bool,
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::InvalidConfig("clients must be >= 1".into()));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sample_rate must lie in (0, 1], got {}",
                self.sample_rate
            )));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be >= 1".into()));
        }
        if self.inner_epochs == 0 {
            return Err(Error::InvalidConfig("inner_epochs must be >= 1".into()));
        }
        if !(self.inner_lr > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "inner_lr must be positive, got {}",
                self.inner_lr
            )));
        }
        if !(self.outer_lr > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "outer_lr must be positive, got {}",
                self.outer_lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        self.strategy.validate()
    }

    /// Clients sampled per round: `ceil(sample_rate * clients)`, at least 1.
    pub fn sample_count(&self) -> usize {
        ((self.sample_rate * self.clients as f64).ceil() as usize).clamp(1, self.clients)
    }
}

/// Whether per-client inner updates run on the rayon pool or sequentially.
/// Results are bit-identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Parallel,
    Serial,
}

/// Mutable state threaded through the rounds.
#[derive(Debug, Clone)]
pub struct ExperimentState {
    pub net: NetworkSpec,
    pub phi: ParamVector,
    pub history: HistoryStore,
    /// Completed rounds; 0 before training.
    pub round: usize,
}

/// Per-round evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// 1-based round; the final personalized evaluation uses `rounds + 1`.
    pub round: usize,
    /// Mean local-test accuracy over the evaluated clients.
    pub mean_accuracy: f64,
    /// Mean per-batch training loss over the clients that trained this round.
    pub mean_train_loss: f64,
    /// (client id, local-test accuracy) for every evaluated client.
    pub per_client_accuracy: Vec<(usize, f64)>,
    /// Wall-clock duration of the round in seconds.
    pub seconds: f64,
}

impl MetricsRecord {
    pub fn n_evaluated(&self) -> usize {
        self.per_client_accuracy.len()
    }
}

/// Everything a completed experiment produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// One record per round plus a final personalized-evaluation record.
    pub records: Vec<MetricsRecord>,
    pub final_phi: ParamVector,
    pub history: HistoryStore,
}

/// View of a finished round handed to observers (checkpointing, embedding
/// export). `state` is the post-aggregation state.
pub struct RoundSnapshot<'a> {
    pub round: usize,
    pub state: &'a ExperimentState,
    /// Sampled client ids with their inner-update results, ascending by id.
    pub sampled_results: &'a [(usize, InnerResult)],
}

/// Uniform sampling without replacement of `ceil(rate * clients)` distinct
/// ids, deterministic per seed. Returned ascending.
pub fn sample_clients(clients: usize, rate: f64, seed: u64) -> Vec<usize> {
    let count = ((rate * clients as f64).ceil() as usize).clamp(1, clients);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = rand::seq::index::sample(&mut rng, clients, count).into_vec();
    ids.sort_unstable();
    ids
}

/// Fresh state with a seeded meta-initialization.
pub fn init_experiment(net: &NetworkSpec, config: &RoundConfig) -> Result<ExperimentState> {
    config.validate()?;
    let phi = net.init_params(seeds::init_seed(config.seed));
    Ok(ExperimentState {
        net: net.clone(),
        phi,
        history: HistoryStore::new(),
        round: 0,
    })
}

fn check_shards(config: &RoundConfig, shards: &[ClientShard]) -> Result<()> {
    if shards.len() != config.clients {
        return Err(Error::InvalidConfig(format!(
            "config names {} clients but {} shards were provided",
            config.clients,
            shards.len()
        )));
    }
    for (i, shard) in shards.iter().enumerate() {
        if shard.client_id != i {
            return Err(Error::InvalidConfig(format!(
                "shard at position {i} has client_id {}",
                shard.client_id
            )));
        }
    }
    Ok(())
}

fn run_clients<F>(ids: &[usize], mode: ExecMode, job: F) -> Result<Vec<(usize, InnerResult)>>
where
    F: Fn(usize) -> Result<InnerResult> + Sync,
{
    match mode {
        ExecMode::Parallel => {
            // Collect per-slot first: the indexed collect keeps client order,
            // which the error-short-circuiting collect does not guarantee.
            let slots: Vec<Result<(usize, InnerResult)>> = ids
                .par_iter()
                .map(|&id| job(id).map(|r| (id, r)))
                .collect();
            slots.into_iter().collect()
        }
        ExecMode::Serial => ids.iter().map(|&id| job(id).map(|r| (id, r))).collect(),
    }
}

struct RoundOutput {
    state: ExperimentState,
    record: MetricsRecord,
    sampled_results: Vec<(usize, InnerResult)>,
}

fn run_round_full(
    state: &ExperimentState,
    config: &RoundConfig,
    shards: &[ClientShard],
    mode: ExecMode,
) -> Result<RoundOutput> {
    if state.round >= config.rounds {
        return Err(Error::InvalidConfig(format!(
            "round {} out of range: config has {} rounds",
            state.round + 1,
            config.rounds
        )));
    }
    let start = Instant::now();
    let t = state.round + 1;
    let sampled = sample_clients(
        config.clients,
        config.sample_rate,
        seeds::sample_seed(config.seed, t),
    );

    let sampled_results = run_clients(&sampled, mode, |id| {
        inner_update(
            config.strategy,
            &state.net,
            &state.phi,
            &shards[id],
            state.history.get(id),
            config.inner_epochs,
            config.inner_lr,
            config.batch_size,
            seeds::client_train_seed(config.seed, t, id),
        )
    })?;

    let phi_next = match config.strategy {
        StrategyKind::FedAvg => {
            let weighted: Vec<(ParamVector, f64)> = sampled_results
                .iter()
                .map(|(id, r)| (r.adapted.clone(), shards[*id].train.len() as f64))
                .collect();
            outer_update_fedavg(&weighted)?
        }
        _ => {
            let adapted: Vec<ParamVector> = sampled_results
                .iter()
                .map(|(_, r)| r.adapted.clone())
                .collect();
            outer_update_reptile(&state.phi, &adapted, config.outer_lr)?
        }
    };

    // Line-18 ordering: stored models are the inner-loop results computed
    // from the pre-round phi, written after the barrier, never phi itself.
    let mut history_next = state.history.clone();
    for (id, result) in &sampled_results {
        history_next = update_history(&history_next, *id, result);
    }

    let mean_train_loss = sampled_results
        .iter()
        .map(|(_, r)| r.mean_loss())
        .sum::<f64>()
        / sampled_results.len() as f64;

    let state_next = ExperimentState {
        net: state.net.clone(),
        phi: phi_next,
        history: history_next,
        round: t,
    };

    let per_client_accuracy: Vec<(usize, f64)> = if config.evaluate_all {
        evaluate_population(&state_next, config, shards, t, mode)?
    } else {
        sampled_results
            .iter()
            .map(|(id, r)| (*id, r.test_accuracy))
            .collect()
    };
    let mean_accuracy = per_client_accuracy.iter().map(|(_, a)| a).sum::<f64>()
        / per_client_accuracy.len() as f64;

    Ok(RoundOutput {
        state: state_next,
        record: MetricsRecord {
            round: t,
            mean_accuracy,
            mean_train_loss,
            per_client_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        },
        sampled_results,
    })
}

/// Advance the experiment by one round. Pure: the input state is unchanged.
pub fn run_round(
    state: &ExperimentState,
    config: &RoundConfig,
    shards: &[ClientShard],
    mode: ExecMode,
) -> Result<(ExperimentState, MetricsRecord)> {
    check_shards(config, shards)?;
    run_round_full(state, config, shards, mode).map(|out| (out.state, out.record))
}

/// Evaluation-only pass: every client adapts from the current phi (with its
/// stored model, when one exists) and reports local-test accuracy. Neither
/// phi nor the history store is modified.
fn evaluate_population(
    state: &ExperimentState,
    config: &RoundConfig,
    shards: &[ClientShard],
    round_tag: usize,
    mode: ExecMode,
) -> Result<Vec<(usize, f64)>> {
    let ids: Vec<usize> = (0..config.clients).collect();
    let results = run_clients(&ids, mode, |id| {
        inner_update(
            config.strategy,
            &state.net,
            &state.phi,
            &shards[id],
            state.history.get(id),
            config.inner_epochs,
            config.inner_lr,
            config.batch_size,
            seeds::client_eval_seed(config.seed, round_tag, id),
        )
    })?;
    Ok(results
        .iter()
        .map(|(id, r)| (*id, r.test_accuracy))
        .collect())
}

/// Full personalized evaluation: every client fine-tunes from the current
/// phi with the same inner budget as training and is scored on its local
/// test split. Returns the record (tagged `rounds + 1`).
fn final_evaluation(
    state: &ExperimentState,
    config: &RoundConfig,
    shards: &[ClientShard],
    mode: ExecMode,
) -> Result<MetricsRecord> {
    let start = Instant::now();
    let tag = config.rounds + 1;
    let ids: Vec<usize> = (0..config.clients).collect();
    let results = run_clients(&ids, mode, |id| {
        inner_update(
            config.strategy,
            &state.net,
            &state.phi,
            &shards[id],
            state.history.get(id),
            config.inner_epochs,
            config.inner_lr,
            config.batch_size,
            seeds::client_eval_seed(config.seed, tag, id),
        )
    })?;
    let per_client_accuracy: Vec<(usize, f64)> =
        results.iter().map(|(id, r)| (*id, r.test_accuracy)).collect();
    let mean_accuracy = per_client_accuracy.iter().map(|(_, a)| a).sum::<f64>()
        / per_client_accuracy.len() as f64;
    let mean_train_loss =
        results.iter().map(|(_, r)| r.mean_loss()).sum::<f64>() / results.len() as f64;
    Ok(MetricsRecord {
        round: tag,
        mean_accuracy,
        mean_train_loss,
        per_client_accuracy,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Run the full T-round experiment plus the final personalized evaluation.
pub fn run_experiment(
    net: &NetworkSpec,
    config: &RoundConfig,
    shards: &[ClientShard],
    mode: ExecMode,
) -> Result<ExperimentOutcome> {
    run_experiment_with(net, config, shards, mode, |_| Ok(()))
}

/// Like [`run_experiment`], invoking `observer` after every round with a
/// snapshot of the new state and the sampled clients' results.
pub fn run_experiment_with<F>(
    net: &NetworkSpec,
    config: &RoundConfig,
    shards: &[ClientShard],
    mode: ExecMode,
    mut observer: F,
) -> Result<ExperimentOutcome>
where
    F: FnMut(&RoundSnapshot<'_>) -> Result<()>,
{
    config.validate()?;
    check_shards(config, shards)?;
    let mut state = init_experiment(net, config)?;
    let mut records = Vec::with_capacity(config.rounds + 1);
    for _ in 0..config.rounds {
        let out = run_round_full(&state, config, shards, mode)?;
        state = out.state;
        observer(&RoundSnapshot {
            round: state.round,
            state: &state,
            sampled_results: &out.sampled_results,
        })?;
        records.push(out.record);
    }
    records.push(final_evaluation(&state, config, shards, mode)?);
    Ok(ExperimentOutcome {
        records,
        final_phi: state.phi,
        history: state.history,
    })
}

/// Append one CSV row with the mean hidden-layer activation of `params` over
/// the shard's train split, tagged with round and client id. Creates the
/// file on first use.
pub fn dump_embeddings(
    spec: &NetworkSpec,
    params: &ParamVector,
    shard: &ClientShard,
    layer_index: usize,
    round: usize,
    path: &Path,
) -> Result<()> {
    let activations = forward_hidden(spec, params, &shard.train.to_batch()?, layer_index)?;
    let rows = activations.nrows() as f64;
    let mean = activations.sum_axis(ndarray::Axis(0)) / rows;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut line = format!("{round},{}", shard.client_id);
    for v in mean.iter() {
        line.push(',');
        line.push_str(&v.to_string());
    }
    writeln!(file, "{line}")?;
    Ok(())
}

/// Render records as the metrics CSV: `round,mean_acc,mean_loss,n_evaluated,
/// seconds`. With `include_timing = false` the seconds column is written as
/// 0.000 so the file is byte-identical across reruns; real durations always
/// remain available on the records themselves.
pub fn metrics_csv(records: &[MetricsRecord], include_timing: bool) -> String {
    let mut out = String::from("round,mean_acc,mean_loss,n_evaluated,seconds\n");
    for r in records {
        let seconds = if include_timing { r.seconds } else { 0.0 };
        out.push_str(&format!(
            "{},{},{},{},{:.3}\n",
            r.round,
            r.mean_accuracy,
            r.mean_train_loss,
            r.n_evaluated(),
            seconds
        ));
    }
    out
}

/// Write [`metrics_csv`] to a file.
pub fn write_metrics_csv(
    records: &[MetricsRecord],
    path: &Path,
    include_timing: bool,
) -> Result<()> {
    std::fs::write(path, metrics_csv(records, include_timing))?;
    Ok(())
}

//! Per-client inner updates for each strategy and the server-side outer
//! update rules.
//!
//! All strategies share the same skeleton: start from the broadcast
//! meta-initialization, run `tau` epochs of seeded mini-batch gradient
//! descent on the client's train split, and report the adapted parameters
//! plus local-test accuracy. They differ only in the per-batch objective:
//!
//! - `fedec`: cross-entropy plus `alpha * KL(history(x), current(x))` once a
//!   historical model exists; plain cross-entropy before first participation.
//! - `fedec_l2`: cross-entropy plus `alpha * ||theta - history||^2`, the hard
//!   parameter-space ablation.
//! - `fedec_wo` / `fedavg`: plain cross-entropy.
//! - `perfedavg_fo`: first-order Per-FedAvg; each batch splits into support
//!   and query halves, one adaptation step on support, gradient at the
//!   adapted point on query.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{ClientShard, LabeledDataset};
use crate::error::{Error, Result};
use crate::nncore::{forward, loss_and_grad, sgd_step, NetworkSpec, ParamVector};

/// Local-adaptation strategy. Constraint strategies carry their weight;
/// strategies without a constraint have no alpha by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyKind {
    /// Elastic constraint: KL between the stored model's predictions and the
    /// current predictions on each batch.
    FedEc { alpha: f64 },
    /// Hard constraint: squared parameter distance to the stored model.
    FedEcL2 { alpha: f64 },
    /// Ablation without any constraint (plain Reptile-style meta-learner).
    FedEcWo,
    /// Weighted parameter averaging with plain local training.
    FedAvg,
    /// First-order Per-FedAvg with a support/query split per batch.
    PerFedAvgFo { support_fraction: f64 },
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::FedEc { .. } => "fedec",
            StrategyKind::FedEcL2 { .. } => "fedec_l2",
            StrategyKind::FedEcWo => "fedec_wo",
            StrategyKind::FedAvg => "fedavg",
            StrategyKind::PerFedAvgFo { .. } => "perfedavg_fo",
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            StrategyKind::FedEc { alpha } | StrategyKind::FedEcL2 { alpha } => *alpha,
            _ => 0.0,
        }
    }

    pub fn uses_constraint(&self) -> bool {
        matches!(
            self,
            StrategyKind::FedEc { .. } | StrategyKind::FedEcL2 { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StrategyKind::FedEc { alpha } | StrategyKind::FedEcL2 { alpha } if *alpha < 0.0 => {
                Err(Error::InvalidConfig(format!("alpha must be >= 0, got {alpha}")))
            }
            StrategyKind::PerFedAvgFo { support_fraction }
                if !(*support_fraction > 0.0 && *support_fraction < 1.0) =>
            {
                Err(Error::InvalidConfig(format!(
                    "support_fraction must lie in (0, 1), got {support_fraction}"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-client memory module: client id -> stored adapted parameters. An
/// entry exists exactly when the client has completed at least one inner
/// update, and holds the most recent one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistoryStore {
    entries: BTreeMap<usize, ParamVector>,
}

impl HistoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, client_id: usize) -> Option<&ParamVector> {
        self.entries.get(&client_id)
    }

    pub fn contains(&self, client_id: usize) -> bool {
        self.entries.contains_key(&client_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Client ids with stored models, ascending.
    pub fn client_ids(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }
}

/// Store a copy of the client's adapted parameters, replacing any previous
/// entry. Returns the updated store; the input store is untouched.
pub fn update_history(
    store: &HistoryStore,
    client_id: usize,
    result: &InnerResult,
) -> HistoryStore {
    let mut next = store.clone();
    next.entries.insert(client_id, result.adapted.clone());
    next
}

/// Outcome of one client's local adaptation.
#[derive(Debug, Clone)]
pub struct InnerResult {
    /// Parameters after `tau` epochs of local training.
    pub adapted: ParamVector,
    /// Per-batch objective values, `tau * batches_per_epoch` entries.
    pub loss_trace: Vec<f64>,
    /// Accuracy of the adapted parameters on the client's local test split.
    pub test_accuracy: f64,
    /// Gradient steps in which a history constraint term was active.
    pub constrained_steps: usize,
}

impl InnerResult {
    pub fn mean_loss(&self) -> f64 {
        if self.loss_trace.is_empty() {
            return 0.0;
        }
        self.loss_trace.iter().sum::<f64>() / self.loss_trace.len() as f64
    }
}

/// Fraction of `data` rows whose argmax prediction matches the label.
/// An empty split scores 0.
pub fn local_test_accuracy(
    spec: &NetworkSpec,
    params: &ParamVector,
    data: &LabeledDataset,
) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let pred = forward(spec, params, &data.to_batch()?)?;
    let hits = pred
        .argmax()
        .iter()
        .zip(data.labels())
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// Run one client's local adaptation for `tau` epochs of mini-batch descent,
/// starting from the broadcast `phi`. Batch order is seeded; identical
/// arguments replay bit for bit.
#[allow(clippy::too_many_arguments)]
pub fn inner_update(
    kind: StrategyKind,
    spec: &NetworkSpec,
    phi: &ParamVector,
    shard: &ClientShard,
    history: Option<&ParamVector>,
    tau: usize,
    lr_in: f64,
    batch_size: usize,
    seed: u64,
) -> Result<InnerResult> {
    kind.validate()?;
    spec.check_params(phi)?;
    if let Some(hist) = history {
        phi.check_same_layout(hist)?;
    }
    if shard.train.is_empty() {
        return Err(Error::Empty { what: "client train split" });
    }
    if tau == 0 {
        return Err(Error::InvalidConfig("inner epochs must be >= 1".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be >= 1".into()));
    }

    let n = shard.train.len();
    let chunk = batch_size.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = phi.clone();
    let mut loss_trace = Vec::with_capacity(tau * n.div_ceil(chunk));
    let mut constrained_steps = 0;

    for _ in 0..tau {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for indices in order.chunks(chunk) {
            let batch = shard.train.batch_of(indices)?;
            let (loss, gradient) = match kind {
                StrategyKind::FedEc { alpha } => match history {
                    Some(hist) if alpha > 0.0 => {
                        constrained_steps += 1;
                        let hist_pred = forward(spec, hist, &batch)?;
                        loss_and_grad(spec, &theta, &batch, Some(&hist_pred), alpha)?
                    }
                    _ => loss_and_grad(spec, &theta, &batch, None, 0.0)?,
                },
                StrategyKind::FedEcL2 { alpha } => match history {
                    Some(hist) if alpha > 0.0 => {
                        constrained_steps += 1;
                        let (ce, ce_grad) = loss_and_grad(spec, &theta, &batch, None, 0.0)?;
                        let diff = theta.sub(hist)?;
                        let loss = ce + alpha * theta.squared_distance(hist)?;
                        (loss, ce_grad.add(&diff.scale(2.0 * alpha))?)
                    }
                    _ => loss_and_grad(spec, &theta, &batch, None, 0.0)?,
                },
                StrategyKind::FedEcWo | StrategyKind::FedAvg => {
                    loss_and_grad(spec, &theta, &batch, None, 0.0)?
                }
                StrategyKind::PerFedAvgFo { support_fraction } => {
                    if indices.len() < 2 {
                        // Too small to split; degenerate plain step.
                        loss_and_grad(spec, &theta, &batch, None, 0.0)?
                    } else {
                        let split = (((indices.len() as f64) * support_fraction).round()
                            as usize)
                            .clamp(1, indices.len() - 1);
                        let support = shard.train.batch_of(&indices[..split])?;
                        let query = shard.train.batch_of(&indices[split..])?;
                        let (_, support_grad) =
                            loss_and_grad(spec, &theta, &support, None, 0.0)?;
                        let adapted = sgd_step(&theta, &support_grad, lr_in)?;
                        loss_and_grad(spec, &adapted, &query, None, 0.0)?
                    }
                }
            };
            theta = sgd_step(&theta, &gradient, lr_in)?;
            loss_trace.push(loss);
        }
    }

    let test_accuracy = local_test_accuracy(spec, &theta, &shard.test)?;
    Ok(InnerResult {
        adapted: theta,
        loss_trace,
        test_accuracy,
        constrained_steps,
    })
}

/// Element-wise mean of the given parameter vectors, summed in list order.
fn average(params: &[ParamVector]) -> Result<ParamVector> {
    let first = params.first().ok_or(Error::Empty {
        what: "adapted parameter list",
    })?;
    let mut acc = vec![0.0; first.len()];
    for p in params {
        first.check_same_layout(p)?;
        for (a, v) in acc.iter_mut().zip(p.values()) {
            *a += v;
        }
    }
    let n = params.len() as f64;
    for a in acc.iter_mut() {
        *a /= n;
    }
    ParamVector::from_values(first.layout_arc(), acc)
}

/// Reptile-style outer update: `phi + lr_out * mean(theta_i - phi)`.
///
/// At `lr_out = 1` the update collapses algebraically to the plain average of
/// the adapted parameters and is computed as such, so it agrees bit for bit
/// with equal-weight federated averaging.
pub fn outer_update_reptile(
    phi: &ParamVector,
    adapted: &[ParamVector],
    lr_out: f64,
) -> Result<ParamVector> {
    let mean = average(adapted)?;
    phi.check_same_layout(&mean)?;
    if lr_out == 1.0 {
        return Ok(mean);
    }
    if lr_out == 0.0 {
        return Ok(phi.clone());
    }
    let values = phi
        .values()
        .iter()
        .zip(mean.values())
        .map(|(p, m)| p + lr_out * (m - p))
        .collect();
    ParamVector::from_values(phi.layout_arc(), values)
}

/// Weight-normalized average of adapted parameters.
pub fn outer_update_fedavg(adapted: &[(ParamVector, f64)]) -> Result<ParamVector> {
    let (first, _) = adapted.first().ok_or(Error::Empty {
        what: "adapted parameter list",
    })?;
    let mut total_weight = 0.0;
    let mut acc = vec![0.0; first.len()];
    for (p, w) in adapted {
        first.check_same_layout(p)?;
        if !(*w > 0.0) || !w.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "aggregation weights must be positive, got {w}"
            )));
        }
        total_weight += w;
        for (a, v) in acc.iter_mut().zip(p.values()) {
            *a += w * v;
        }
    }
    for a in acc.iter_mut() {
        *a /= total_weight;
    }
    ParamVector::from_values(first.layout_arc(), acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{shard_partition, synth_mixture, PartitionSpec};
    use crate::nncore::{constrained_loss, cross_entropy, Batch, Prediction};
    use ndarray::Array2;
    use proptest::prelude::*;

    fn small_task(seed: u64) -> (NetworkSpec, ClientShard) {
        let ds = synth_mixture(3, 2, 30, 4.0, seed).unwrap();
        let partition = shard_partition(&ds, &PartitionSpec::new(3, 1, seed)).unwrap();
        let spec = NetworkSpec::new(vec![2, 16, 3]).unwrap();
        (spec, partition.shards.into_iter().next().unwrap())
    }

    #[test]
    fn fedec_without_history_replays_fedec_wo() {
        let (spec, shard) = small_task(1);
        let phi = spec.init_params(0);
        let a = inner_update(
            StrategyKind::FedEc { alpha: 2.0 },
            &spec, &phi, &shard, None, 2, 0.1, 8, 7,
        )
        .unwrap();
        let b = inner_update(StrategyKind::FedEcWo, &spec, &phi, &shard, None, 2, 0.1, 8, 7)
            .unwrap();
        assert_eq!(a.adapted.values(), b.adapted.values());
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.constrained_steps, 0);
    }

    #[test]
    fn fedec_with_zero_alpha_replays_fedec_wo() {
        let (spec, shard) = small_task(2);
        let phi = spec.init_params(0);
        let history = spec.init_params(99);
        let a = inner_update(
            StrategyKind::FedEc { alpha: 0.0 },
            &spec, &phi, &shard, Some(&history), 2, 0.1, 8, 7,
        )
        .unwrap();
        let b = inner_update(StrategyKind::FedEcWo, &spec, &phi, &shard, None, 2, 0.1, 8, 7)
            .unwrap();
        assert_eq!(a.adapted.values(), b.adapted.values());
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn same_seed_replays_bit_for_bit() {
        let (spec, shard) = small_task(3);
        let phi = spec.init_params(1);
        let history = spec.init_params(2);
        let run = || {
            inner_update(
                StrategyKind::FedEc { alpha: 1.0 },
                &spec, &phi, &shard, Some(&history), 3, 0.05, 4, 11,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.adapted.values(), b.adapted.values());
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.test_accuracy, b.test_accuracy);
        assert!(a.constrained_steps > 0);
    }

    #[test]
    fn loss_trace_length_is_epochs_times_batches() {
        let (spec, shard) = small_task(4);
        let phi = spec.init_params(1);
        let n = shard.train.len();
        let result =
            inner_update(StrategyKind::FedEcWo, &spec, &phi, &shard, None, 3, 0.1, 7, 0).unwrap();
        assert_eq!(result.loss_trace.len(), 3 * n.div_ceil(7));
    }

    #[test]
    fn huge_l2_alpha_pins_parameters_while_elastic_still_moves() {
        let (spec, shard) = small_task(5);
        let phi = spec.init_params(1);
        // Stability of the quadratic penalty needs lr * 2 * alpha < 2.
        let alpha = 1e6;
        let lr = 4e-7;
        let run = |kind, epochs| {
            inner_update(kind, &spec, &phi, &shard, Some(&phi), epochs, lr, 8, 3)
                .unwrap()
                .adapted
                .sub(&phi)
                .unwrap()
                .l2_norm()
        };
        // The hard constraint clamps theta at an equilibrium next to phi
        // regardless of how long training runs; the elastic constraint only
        // pins predictions, so parameters keep drifting along the
        // prediction-preserving directions batch after batch.
        let d_l2_short = run(StrategyKind::FedEcL2 { alpha }, 100);
        let d_l2_long = run(StrategyKind::FedEcL2 { alpha }, 1000);
        let d_elastic_short = run(StrategyKind::FedEc { alpha }, 100);
        let d_elastic_long = run(StrategyKind::FedEc { alpha }, 1000);
        assert!(d_l2_long < 1e-5, "l2 displacement {d_l2_long}");
        assert!(d_l2_long < 1.5 * d_l2_short, "l2 kept moving: {d_l2_short} -> {d_l2_long}");
        assert!(
            d_elastic_long > 2.0 * d_l2_long,
            "elastic {d_elastic_long} vs l2 {d_l2_long}"
        );
        assert!(
            d_elastic_long > 1.3 * d_elastic_short,
            "elastic drift stalled: {d_elastic_short} -> {d_elastic_long}"
        );
    }

    #[test]
    fn elastic_constraint_reaches_lower_training_loss_than_l2() {
        // Fixed two-class task with overlapping clusters, constrained toward
        // a distant untrained model: the smoothed-target optimum differs from
        // the stored model. The hard form drags parameters into the stored
        // model's neighborhood and cannot fit from there; the elastic form
        // only has to track its (near-uniform) predictions and keeps
        // learning.
        let ds = synth_mixture(3, 2, 60, 2.0, 5).unwrap();
        let partition = shard_partition(&ds, &PartitionSpec::new(3, 2, 5)).unwrap();
        let spec = NetworkSpec::new(vec![2, 16, 3]).unwrap();
        let shard = &partition.shards[0];
        let phi = spec.init_params(1);
        let history = spec.init_params(2);
        let final_ce = |r: &InnerResult| {
            cross_entropy(
                &forward(&spec, &r.adapted, &shard.train.to_batch().unwrap()).unwrap(),
                shard.train.labels(),
            )
            .unwrap()
        };
        for alpha in [2.0, 4.0, 6.0] {
            let run = |kind| {
                inner_update(kind, &spec, &phi, shard, Some(&history), 60, 0.05, 8, 3).unwrap()
            };
            let elastic = run(StrategyKind::FedEc { alpha });
            let hard = run(StrategyKind::FedEcL2 { alpha });
            assert!(
                final_ce(&elastic) <= final_ce(&hard),
                "alpha={alpha}: elastic {} vs l2 {}",
                final_ce(&elastic),
                final_ce(&hard)
            );
        }
    }

    #[test]
    fn perfedavg_trains_and_traces_query_losses() {
        let (spec, shard) = small_task(7);
        let phi = spec.init_params(1);
        let result = inner_update(
            StrategyKind::PerFedAvgFo { support_fraction: 0.5 },
            &spec, &phi, &shard, None, 2, 0.1, 8, 9,
        )
        .unwrap();
        let n = shard.train.len();
        assert_eq!(result.loss_trace.len(), 2 * n.div_ceil(8));
        assert_eq!(result.constrained_steps, 0);
    }

    #[test]
    fn empty_train_split_is_an_error() {
        let (spec, shard) = small_task(8);
        let empty = ClientShard {
            client_id: 0,
            classes: vec![0],
            train: shard.train.subset(&[]),
            test: shard.test.clone(),
        };
        let phi = spec.init_params(1);
        assert!(matches!(
            inner_update(StrategyKind::FedEcWo, &spec, &phi, &empty, None, 1, 0.1, 4, 0),
            Err(Error::Empty { .. })
        ));
    }

    fn params(spec: &NetworkSpec, values: Vec<f64>) -> ParamVector {
        ParamVector::from_values(spec.param_layout(), values).unwrap()
    }

    #[test]
    fn reptile_examples() {
        let spec = NetworkSpec::new(vec![1, 1]).unwrap();
        let phi = params(&spec, vec![0.0, 0.0]);
        let a = params(&spec, vec![2.0, 0.0]);
        let b = params(&spec, vec![0.0, 2.0]);

        // Single client, lr_out = 1: phi' = theta.
        let single = outer_update_reptile(&phi, std::slice::from_ref(&a), 1.0).unwrap();
        assert_eq!(single.values(), a.values());

        // lr_out = 0: phi' = phi.
        let frozen = outer_update_reptile(&phi, &[a.clone(), b.clone()], 0.0).unwrap();
        assert_eq!(frozen.values(), phi.values());

        // Direct evaluation of the averaged direction.
        let half = outer_update_reptile(&phi, &[a, b], 0.5).unwrap();
        assert_eq!(half.values(), &[0.5, 0.5]);

        assert!(matches!(
            outer_update_reptile(&phi, &[], 0.5),
            Err(Error::Empty { .. })
        ));
    }

    #[test]
    fn fedavg_examples() {
        let spec = NetworkSpec::new(vec![1, 1]).unwrap();
        let p = params(&spec, vec![0.3, -1.7]);
        // Equal weights over identical params: exact identity for two clients.
        let same = outer_update_fedavg(&[(p.clone(), 1.0), (p.clone(), 1.0)]).unwrap();
        assert_eq!(same.values(), p.values());

        let zero = params(&spec, vec![0.0, 0.0]);
        let four = params(&spec, vec![4.0, 4.0]);
        let weighted = outer_update_fedavg(&[(zero, 1.0), (four, 3.0)]).unwrap();
        assert_eq!(weighted.values(), &[3.0, 3.0]);

        assert!(outer_update_fedavg(&[(p, 0.0)]).is_err());
        assert!(matches!(outer_update_fedavg(&[]), Err(Error::Empty { .. })));
    }

    #[test]
    fn reptile_at_unit_rate_matches_fedavg_bit_for_bit() {
        let spec = NetworkSpec::new(vec![3, 5, 2]).unwrap();
        let phi = spec.init_params(0);
        let adapted: Vec<ParamVector> = (1..=4).map(|s| spec.init_params(s)).collect();
        let reptile = outer_update_reptile(&phi, &adapted, 1.0).unwrap();
        let weighted: Vec<(ParamVector, f64)> =
            adapted.iter().map(|p| (p.clone(), 1.0)).collect();
        let fedavg = outer_update_fedavg(&weighted).unwrap();
        let rep_bits: Vec<u64> = reptile.values().iter().map(|v| v.to_bits()).collect();
        let avg_bits: Vec<u64> = fedavg.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(rep_bits, avg_bits);
    }

    #[test]
    fn history_store_semantics() {
        let spec = NetworkSpec::new(vec![2, 2]).unwrap();
        let store = HistoryStore::new();
        let result = InnerResult {
            adapted: spec.init_params(1),
            loss_trace: vec![1.0],
            test_accuracy: 0.5,
            constrained_steps: 0,
        };
        let store1 = update_history(&store, 3, &result);
        assert_eq!(store.len(), 0);
        assert_eq!(store1.len(), 1);
        assert_eq!(store1.get(3).unwrap().values(), result.adapted.values());

        let replacement = InnerResult {
            adapted: spec.init_params(2),
            loss_trace: vec![0.5],
            test_accuracy: 0.9,
            constrained_steps: 1,
        };
        let store2 = update_history(&store1, 3, &replacement);
        assert_eq!(store2.len(), 1);
        assert_eq!(store2.get(3).unwrap().values(), replacement.adapted.values());
        assert_eq!(store1.get(3).unwrap().values(), result.adapted.values());
        assert_eq!(store2.client_ids(), vec![3]);
    }

    proptest! {
        // Aggregation is permutation-invariant up to floating-point
        // reassociation.
        #[test]
        fn reptile_is_permutation_invariant(seed in 0u64..200, lr in 0.1..1.0f64) {
            let spec = NetworkSpec::new(vec![2, 3]).unwrap();
            let phi = spec.init_params(seed);
            let mut adapted: Vec<ParamVector> =
                (0..5).map(|i| spec.init_params(seed * 7 + i)).collect();
            let forward_order = outer_update_reptile(&phi, &adapted, lr).unwrap();
            adapted.reverse();
            let reverse_order = outer_update_reptile(&phi, &adapted, lr).unwrap();
            for (a, b) in forward_order.values().iter().zip(reverse_order.values()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        // Raising alpha never lowers the constraint's contribution at a
        // fixed parameter point.
        #[test]
        fn constraint_contribution_is_monotone_in_alpha(
            seed in 0u64..200,
            alpha_low in 0.0..2.0f64,
            extra in 0.0..2.0f64,
        ) {
            let spec = NetworkSpec::new(vec![2, 16, 3]).unwrap();
            let theta = spec.init_params(seed);
            let history = spec.init_params(seed + 1000);
            let features = Array2::from_shape_fn((4, 2), |(i, j)| (i as f64) - (j as f64) * 0.5);
            let batch = Batch::new(features, vec![0, 1, 2, 0]).unwrap();
            let hist_pred: Prediction = forward(&spec, &history, &batch).unwrap();
            let low = constrained_loss(&spec, &theta, &batch, &hist_pred, alpha_low).unwrap();
            let high =
                constrained_loss(&spec, &theta, &batch, &hist_pred, alpha_low + extra).unwrap();
            prop_assert!(high >= low - 1e-12);
        }
    }
}

//! Class-shard non-IID partitioning.
//!
//! Each class is split into `S = clients * classes_per_client / classes`
//! equal shards; every client draws `classes_per_client` shards from a
//! shuffled allocation pool in which each class appears exactly `S` times.
//! A client may draw the same class more than once. Within a client, data is
//! shuffled and split into train/test by a fixed ratio. Everything is driven
//! by one seeded stream, so a spec + dataset pair always yields the same
//! partition.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};

/// How to split a dataset across clients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub clients: usize,
    pub classes_per_client: usize,
    pub seed: u64,
    /// Fraction of each client's data used for training (default 0.8).
    pub train_fraction: f64,
}

impl PartitionSpec {
    pub fn new(clients: usize, classes_per_client: usize, seed: u64) -> Self {
        Self {
            clients,
            classes_per_client,
            seed,
            train_fraction: 0.8,
        }
    }

    pub fn with_train_fraction(mut self, fraction: f64) -> Self {
        self.train_fraction = fraction;
        self
    }
}

/// One client's local data: disjoint train and test sets drawn from at most
/// `classes_per_client` distinct classes.
#[derive(Debug, Clone)]
pub struct ClientShard {
    pub client_id: usize,
    /// Allocated classes, sorted, with repeats kept.
    pub classes: Vec<usize>,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Accounting for a partition, emitted as a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub clients: usize,
    pub classes_per_client: usize,
    pub shards_per_class: usize,
    /// Shard size for each class.
    pub shard_sizes: Vec<usize>,
    /// Examples dropped per class when the class size is not divisible by
    /// the shard count.
    pub dropped_examples: Vec<usize>,
    pub train_fraction: f64,
    /// Allocated classes per client, sorted, with repeats kept.
    pub assignments: Vec<Vec<usize>>,
}

impl PartitionSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// Stable FNV-1a hash of the summary, for comparing partitions across
    /// runs without shipping the data.
    pub fn stable_hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("summary serializes");
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.as_bytes() {
            hash ^= u64::from(*b);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        hash
    }
}

/// A full partition: the client shards plus the accounting summary.
#[derive(Debug, Clone)]
pub struct Partition {
    pub shards: Vec<ClientShard>,
    pub summary: PartitionSummary,
}

/// Split `dataset` into non-IID client shards according to `spec`.
pub fn shard_partition(dataset: &LabeledDataset, spec: &PartitionSpec) -> Result<Partition> {
    let classes = dataset.class_count();
    let n = spec.clients;
    let k = spec.classes_per_client;
    if n == 0 || k == 0 {
        return Err(Error::InvalidPartition(
            "clients and classes_per_client must be positive".into(),
        ));
    }
    if k > classes {
        return Err(Error::InvalidPartition(format!(
            "classes_per_client {k} exceeds class count {classes}"
        )));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidPartition(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    if !(n * k).is_multiple_of(classes) {
        return Err(Error::IndivisibleShards {
            product: n * k,
            classes,
        });
    }
    let shards_per_class = n * k / classes;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Split each class into equal shards of its shuffled examples.
    let mut class_shards: Vec<Vec<Vec<usize>>> = Vec::with_capacity(classes);
    let mut shard_sizes = Vec::with_capacity(classes);
    let mut dropped_examples = Vec::with_capacity(classes);
    for c in 0..classes {
        let mut indices: Vec<usize> = dataset
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == c)
            .map(|(i, _)| i)
            .collect();
        if indices.len() < shards_per_class {
            return Err(Error::InsufficientClassExamples {
                class: c,
                have: indices.len(),
                need: shards_per_class,
            });
        }
        indices.shuffle(&mut rng);
        let shard_size = indices.len() / shards_per_class;
        dropped_examples.push(indices.len() - shard_size * shards_per_class);
        shard_sizes.push(shard_size);
        class_shards.push(
            indices
                .chunks(shard_size)
                .take(shards_per_class)
                .map(|chunk| chunk.to_vec())
                .collect(),
        );
    }

    // Allocation pool: every class exactly `shards_per_class` times, dealt
    // out `classes_per_client` at a time. Duplicates within a client are
    // permitted by construction.
    let mut pool: Vec<usize> = (0..classes)
        .flat_map(|c| std::iter::repeat_n(c, shards_per_class))
        .collect();
    pool.shuffle(&mut rng);

    let mut cursor = vec![0usize; classes];
    let mut shards = Vec::with_capacity(n);
    let mut assignments = Vec::with_capacity(n);
    for client_id in 0..n {
        let mut allocated: Vec<usize> = pool[client_id * k..(client_id + 1) * k].to_vec();
        let mut example_indices = Vec::new();
        for &c in &allocated {
            example_indices.extend_from_slice(&class_shards[c][cursor[c]]);
            cursor[c] += 1;
        }
        allocated.sort_unstable();
        example_indices.shuffle(&mut rng);

        let total = example_indices.len();
        let train_count = if total >= 2 {
            (((total as f64) * spec.train_fraction).floor() as usize).clamp(1, total - 1)
        } else {
            total
        };
        let train = dataset.subset(&example_indices[..train_count]);
        let test = dataset.subset(&example_indices[train_count..]);
        assignments.push(allocated.clone());
        shards.push(ClientShard {
            client_id,
            classes: allocated,
            train,
            test,
        });
    }

    Ok(Partition {
        shards,
        summary: PartitionSummary {
            clients: n,
            classes_per_client: k,
            shards_per_class,
            shard_sizes,
            dropped_examples,
            train_fraction: spec.train_fraction,
            assignments,
        },
    })
}

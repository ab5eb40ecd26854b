//! Dataset generation, ingestion, and non-IID client partitioning.

pub mod csvio;
pub mod partition;
pub mod synth;

pub use csvio::{load_csv, save_csv};
pub use partition::{shard_partition, ClientShard, Partition, PartitionSpec, PartitionSummary};
pub use synth::synth_mixture;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::nncore::Batch;

/// A pool of labeled examples with a fixed class count.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::ShapeMismatch {
                left: format!("{} feature rows", features.nrows()),
                right: format!("{} labels", labels.len()),
            });
        }
        if classes == 0 {
            return Err(Error::InvalidConfig("class count must be positive".into()));
        }
        for &label in &labels {
            if label >= classes {
                return Err(Error::LabelOutOfRange { label, classes });
            }
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let features = Array2::from_shape_fn((indices.len(), self.feature_dim()), |(i, j)| {
            self.features[[indices[i], j]]
        });
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        LabeledDataset {
            features,
            labels,
            classes: self.classes,
        }
    }

    /// The whole dataset as one batch.
    pub fn to_batch(&self) -> Result<Batch> {
        Batch::new(self.features.clone(), self.labels.clone())
    }

    /// Batch holding the given rows, in the given order.
    pub fn batch_of(&self, indices: &[usize]) -> Result<Batch> {
        let features = Array2::from_shape_fn((indices.len(), self.feature_dim()), |(i, j)| {
            self.features[[indices[i], j]]
        });
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Batch::new(features, labels)
    }
}

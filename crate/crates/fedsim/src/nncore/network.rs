//! Dense feed-forward classifier: architecture, initialization, forward pass.
//!
//! Hidden layers use the rectifier; the output layer is a softmax over class
//! logits. The forward pass is a pure function of (spec, params, batch).

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nncore::params::{LayoutEntry, ParamLayout, ParamVector};

/// Architecture of a dense network: `[input, hidden..., classes]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidNetwork(format!(
                "need at least input and output layers, got {:?}",
                layer_sizes
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidNetwork(format!(
                "zero-width layer in {:?}",
                layer_sizes
            )));
        }
        Ok(Self { layer_sizes })
    }

    pub fn from_dims(input: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(classes);
        Self::new(sizes)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of weight/bias layers (connections, not size entries).
    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn hidden_layer_count(&self) -> usize {
        self.layer_sizes.len() - 2
    }

    /// Layout of the flat parameter vector: per layer a `(out, in)` weight
    /// matrix followed by an `out` bias.
    pub fn param_layout(&self) -> Arc<ParamLayout> {
        let mut entries = Vec::with_capacity(2 * self.layer_count());
        for l in 0..self.layer_count() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            entries.push(LayoutEntry {
                name: format!("layer{}.weight", l + 1),
                shape: vec![fan_out, fan_in],
            });
            entries.push(LayoutEntry {
                name: format!("layer{}.bias", l + 1),
                shape: vec![fan_out],
            });
        }
        Arc::new(ParamLayout::new(entries))
    }

    /// Seeded initialization: weights uniform in
    /// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, biases zero.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let layout = self.param_layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(layout.total_len());
        for l in 0..self.layer_count() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                values.push(rng.gen_range(-bound..=bound));
            }
            values.extend(std::iter::repeat_n(0.0, fan_out));
        }
        ParamVector::from_values(layout, values).expect("layout sized by construction")
    }

    pub fn check_params(&self, params: &ParamVector) -> Result<()> {
        let expected = self.param_layout();
        if expected.as_ref() != params.layout() {
            return Err(Error::LayoutMismatch {
                expected: expected.describe(),
                found: params.layout().describe(),
            });
        }
        Ok(())
    }
}

/// A mini-batch of features with integer class labels.
#[derive(Debug, Clone)]
pub struct Batch {
    features: Array2<f64>,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::Empty { what: "batch" });
        }
        if features.nrows() != labels.len() {
            return Err(Error::ShapeMismatch {
                left: format!("{} feature rows", features.nrows()),
                right: format!("{} labels", labels.len()),
            });
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Per-row class probabilities produced by [`forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    probabilities: Array2<f64>,
}

impl Prediction {
    /// Validate that each row is a probability distribution (non-negative,
    /// sums to 1 within 1e-6).
    pub fn new(probabilities: Array2<f64>) -> Result<Self> {
        for (i, row) in probabilities.outer_iter().enumerate() {
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Error::InvalidDistribution {
                    row: i,
                    reason: "negative or non-finite entry".into(),
                });
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidDistribution {
                    row: i,
                    reason: format!("row sums to {sum}"),
                });
            }
        }
        Ok(Self { probabilities })
    }

    pub fn probabilities(&self) -> ArrayView2<'_, f64> {
        self.probabilities.view()
    }

    pub fn rows(&self) -> usize {
        self.probabilities.nrows()
    }

    pub fn classes(&self) -> usize {
        self.probabilities.ncols()
    }

    pub fn check_same_shape(&self, other: &Prediction) -> Result<()> {
        if self.probabilities.dim() != other.probabilities.dim() {
            return Err(Error::ShapeMismatch {
                left: format!("{:?}", self.probabilities.dim()),
                right: format!("{:?}", other.probabilities.dim()),
            });
        }
        Ok(())
    }

    /// Most likely class per row; ties resolve to the lowest index.
    pub fn argmax(&self) -> Vec<usize> {
        self.probabilities
            .outer_iter()
            .map(|row| {
                let mut best = 0;
                let mut best_p = row[0];
                for (c, &p) in row.iter().enumerate().skip(1) {
                    if p > best_p {
                        best = c;
                        best_p = p;
                    }
                }
                best
            })
            .collect()
    }
}

/// Forward pass through every layer, keeping intermediate activations for
/// backpropagation. `activations[0]` is the input; `activations[l]` the
/// rectified output of hidden layer `l`.
pub(crate) struct ForwardTrace {
    pub activations: Vec<Array2<f64>>,
    pub probabilities: Array2<f64>,
}

fn layer_matrices(spec: &NetworkSpec, params: &ParamVector) -> Vec<(Array2<f64>, Array1<f64>)> {
    let mut out = Vec::with_capacity(spec.layer_count());
    for l in 0..spec.layer_count() {
        let w_entry = 2 * l;
        let shape = &params.layout().entries()[w_entry].shape;
        let w = ArrayView2::from_shape((shape[0], shape[1]), params.entry_slice(w_entry))
            .expect("layout shape matches slice")
            .to_owned();
        let b = Array1::from_vec(params.entry_slice(w_entry + 1).to_vec());
        out.push((w, b));
    }
    out
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = logits.clone();
    for mut row in probs.axis_iter_mut(Axis(0)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
    probs
}

pub(crate) fn forward_trace(
    spec: &NetworkSpec,
    params: &ParamVector,
    batch: &Batch,
) -> Result<ForwardTrace> {
    spec.check_params(params)?;
    if batch.features().ncols() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim(),
            found: batch.features().ncols(),
        });
    }
    let layers = layer_matrices(spec, params);
    let mut activations = Vec::with_capacity(spec.layer_count());
    activations.push(batch.features().to_owned());
    let mut logits = None;
    for (l, (w, b)) in layers.iter().enumerate() {
        let z = activations[l].dot(&w.t()) + b;
        if l + 1 < spec.layer_count() {
            activations.push(z.mapv(|v| v.max(0.0)));
        } else {
            logits = Some(z);
        }
    }
    let probabilities = softmax_rows(&logits.expect("at least one layer"));
    Ok(ForwardTrace {
        activations,
        probabilities,
    })
}

/// Softmax class probabilities for every row of `batch`.
pub fn forward(spec: &NetworkSpec, params: &ParamVector, batch: &Batch) -> Result<Prediction> {
    let trace = forward_trace(spec, params, batch)?;
    Ok(Prediction {
        probabilities: trace.probabilities,
    })
}

/// Rectified activations of hidden layer `layer_index` (0-based) for every
/// row of `batch`.
pub fn forward_hidden(
    spec: &NetworkSpec,
    params: &ParamVector,
    batch: &Batch,
    layer_index: usize,
) -> Result<Array2<f64>> {
    if layer_index >= spec.hidden_layer_count() {
        return Err(Error::LayerOutOfRange {
            index: layer_index,
            hidden: spec.hidden_layer_count(),
        });
    }
    let trace = forward_trace(spec, params, batch)?;
    Ok(trace.activations[layer_index + 1].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn spec_needs_two_layers() {
        assert!(NetworkSpec::new(vec![4]).is_err());
        assert!(NetworkSpec::new(vec![4, 0]).is_err());
        assert!(NetworkSpec::new(vec![4, 3]).is_ok());
    }

    #[test]
    fn zero_params_give_uniform_probabilities() {
        let spec = NetworkSpec::new(vec![3, 2]).unwrap();
        let params = ParamVector::zeros(spec.param_layout());
        let batch = Batch::new(array![[0.3, -1.0, 2.0], [5.0, 5.0, 5.0]], vec![0, 1]).unwrap();
        let pred = forward(&spec, &params, &batch).unwrap();
        for row in pred.probabilities().outer_iter() {
            assert_eq!(row[0], 0.5);
            assert_eq!(row[1], 0.5);
        }
    }

    #[test]
    fn identity_layer_softmax_matches_direct_evaluation() {
        // Single layer, identity weights, zero bias: logits equal the input.
        let spec = NetworkSpec::new(vec![2, 2]).unwrap();
        let params = ParamVector::from_values(
            spec.param_layout(),
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        )
        .unwrap();
        let batch = Batch::new(array![[0.0, 3.0_f64.ln()]], vec![1]).unwrap();
        let pred = forward(&spec, &params, &batch).unwrap();
        assert!((pred.probabilities()[[0, 0]] - 0.25).abs() < 1e-12);
        assert!((pred.probabilities()[[0, 1]] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn permuting_rows_permutes_predictions() {
        let spec = NetworkSpec::new(vec![2, 8, 3]).unwrap();
        let params = spec.init_params(9);
        let batch = Batch::new(array![[0.1, 0.2], [3.0, -1.0], [0.0, 0.0]], vec![0, 1, 2]).unwrap();
        let permuted = Batch::new(array![[0.0, 0.0], [0.1, 0.2], [3.0, -1.0]], vec![2, 0, 1]).unwrap();
        let p = forward(&spec, &params, &batch).unwrap();
        let q = forward(&spec, &params, &permuted).unwrap();
        // Row independence: exact equality, not approximate.
        assert_eq!(p.probabilities().row(0), q.probabilities().row(1));
        assert_eq!(p.probabilities().row(1), q.probabilities().row(2));
        assert_eq!(p.probabilities().row(2), q.probabilities().row(0));
    }

    #[test]
    fn dimension_and_layout_mismatches_are_errors() {
        let spec = NetworkSpec::new(vec![3, 2]).unwrap();
        let other = NetworkSpec::new(vec![4, 2]).unwrap();
        let params = other.init_params(0);
        let batch = Batch::new(array![[0.0, 0.0, 0.0]], vec![0]).unwrap();
        assert!(matches!(
            forward(&spec, &params, &batch),
            Err(Error::LayoutMismatch { .. })
        ));
        let good = spec.init_params(0);
        let wide = Batch::new(array![[0.0, 0.0, 0.0, 0.0]], vec![0]).unwrap();
        assert!(matches!(
            forward(&spec, &good, &wide),
            Err(Error::DimensionMismatch { expected: 3, found: 4 })
        ));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let spec = NetworkSpec::new(vec![4, 8, 3]).unwrap();
        let a = spec.init_params(11);
        let b = spec.init_params(11);
        let c = spec.init_params(12);
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        let bound1 = (6.0 / 12.0_f64).sqrt();
        assert!(a.entry_slice(0).iter().all(|w| w.abs() <= bound1));
        assert!(a.entry_slice(1).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn hidden_activations_have_layer_width() {
        let spec = NetworkSpec::new(vec![2, 7, 3]).unwrap();
        let params = spec.init_params(3);
        let batch = Batch::new(array![[0.5, -0.5], [1.0, 1.0]], vec![0, 1]).unwrap();
        let h = forward_hidden(&spec, &params, &batch, 0).unwrap();
        assert_eq!(h.dim(), (2, 7));
        assert!(matches!(
            forward_hidden(&spec, &params, &batch, 1),
            Err(Error::LayerOutOfRange { index: 1, hidden: 1 })
        ));
    }

    proptest! {
        // Softmax rows always normalize to 1 within 1e-6.
        #[test]
        fn forward_rows_normalize(seed in 0u64..500, x0 in -5.0..5.0f64, x1 in -5.0..5.0f64) {
            let spec = NetworkSpec::new(vec![2, 16, 4]).unwrap();
            let params = spec.init_params(seed);
            let batch = Batch::new(array![[x0, x1]], vec![0]).unwrap();
            let pred = forward(&spec, &params, &batch).unwrap();
            let sum: f64 = pred.probabilities().row(0).sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            prop_assert!(pred.probabilities().iter().all(|&p| p >= 0.0));
        }
    }
}

//! Synthetic Gaussian-mixture datasets.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};

/// Generate `classes` isotropic unit-variance Gaussian clusters whose means
/// sit at mutual distance >= `separation`. Deterministic per seed.
///
/// Means are drawn by seeded rejection sampling inside a box that grows
/// whenever placement stalls, so the procedure terminates for any class
/// count.
pub fn synth_mixture(
    classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::InvalidConfig(format!(
            "synthetic mixture needs at least 2 classes, got {classes}"
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidConfig("feature dimension must be positive".into()));
    }
    if per_class == 0 {
        return Err(Error::InvalidConfig("per_class must be at least 1".into()));
    }
    if !(separation > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "separation must be positive, got {separation}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut half_width = separation * (classes as f64).powf(1.0 / dim as f64).max(1.0);
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while means.len() < classes {
        let mut placed = false;
        for _ in 0..500 {
            let candidate: Vec<f64> = (0..dim)
                .map(|_| rng.gen_range(-half_width..=half_width))
                .collect();
            let ok = means.iter().all(|m| {
                let d2: f64 = m
                    .iter()
                    .zip(&candidate)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d2 >= separation * separation
            });
            if ok {
                means.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            half_width *= 1.5;
        }
    }

    let total = classes * per_class;
    let mut features = Array2::zeros((total, dim));
    let mut labels = Vec::with_capacity(total);
    for (c, mean) in means.iter().enumerate() {
        for i in 0..per_class {
            let row = c * per_class + i;
            for (j, &m) in mean.iter().enumerate() {
                let noise: f64 = rng.sample(StandardNormal);
                features[[row, j]] = m + noise;
            }
            labels.push(c);
        }
    }
    LabeledDataset::new(features, labels, classes)
}

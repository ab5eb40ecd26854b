//! Losses and exact analytic gradients.
//!
//! The composite objective is mean cross-entropy against integer labels plus
//! an optional KL term that pulls current predictions toward a fixed
//! historical model's predictions on the same batch. The historical
//! predictions are constants: no gradient flows into them. Both losses reduce
//! by the batch mean so the constraint weight is batch-size-invariant.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::nncore::network::{forward_trace, Batch, NetworkSpec, Prediction};
use crate::nncore::params::ParamVector;

/// Probabilities are clipped to `[PROB_CLIP, 1]` before every logarithm.
pub const PROB_CLIP: f64 = 1e-12;

fn clipped_ln(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0).ln()
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    for &label in labels {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
    }
    Ok(())
}

fn ce_from_probs(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let batch = probs.nrows() as f64;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -clipped_ln(probs[[i, y]]))
        .sum();
    total / batch
}

fn kl_from_probs(reference: &Array2<f64>, current: &Array2<f64>) -> f64 {
    let batch = reference.nrows() as f64;
    let mut total = 0.0;
    for (r_row, c_row) in reference.outer_iter().zip(current.outer_iter()) {
        for (&r, &c) in r_row.iter().zip(c_row.iter()) {
            total += r * (clipped_ln(r) - clipped_ln(c));
        }
    }
    total / batch
}

/// Mean `-log p(true class)` over the batch.
pub fn cross_entropy(pred: &Prediction, labels: &[usize]) -> Result<f64> {
    if pred.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            left: format!("{} prediction rows", pred.rows()),
            right: format!("{} labels", labels.len()),
        });
    }
    check_labels(labels, pred.classes())?;
    Ok(ce_from_probs(&pred.probabilities().to_owned(), labels))
}

/// Mean `sum_c ref_c * ln(ref_c / cur_c)` over the batch, with the reference
/// (historical) distribution first. Non-negative; zero when the inputs agree.
pub fn kl_divergence(reference: &Prediction, current: &Prediction) -> Result<f64> {
    reference.check_same_shape(current)?;
    Ok(kl_from_probs(
        &reference.probabilities().to_owned(),
        &current.probabilities().to_owned(),
    ))
}

/// Constrained objective `CE + alpha * KL(history, current)` evaluated at
/// `params`. With `alpha = 0` this is exactly the plain cross-entropy.
pub fn constrained_loss(
    spec: &NetworkSpec,
    params: &ParamVector,
    batch: &Batch,
    history_pred: &Prediction,
    alpha: f64,
) -> Result<f64> {
    if alpha < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "constraint weight alpha must be >= 0, got {alpha}"
        )));
    }
    check_labels(batch.labels(), spec.class_count())?;
    let trace = forward_trace(spec, params, batch)?;
    let ce = ce_from_probs(&trace.probabilities, batch.labels());
    if alpha == 0.0 {
        return Ok(ce);
    }
    if history_pred.rows() != batch.len() || history_pred.classes() != spec.class_count() {
        return Err(Error::ShapeMismatch {
            left: format!("{}x{}", history_pred.rows(), history_pred.classes()),
            right: format!("{}x{}", batch.len(), spec.class_count()),
        });
    }
    let kl = kl_from_probs(
        &history_pred.probabilities().to_owned(),
        &trace.probabilities,
    );
    Ok(ce + alpha * kl)
}

/// Loss value and analytic gradient of the (optionally constrained) objective
/// in one backward pass. `history_pred = None` or `alpha = 0` yields the plain
/// cross-entropy gradient, taking the same code path bit for bit.
pub fn loss_and_grad(
    spec: &NetworkSpec,
    params: &ParamVector,
    batch: &Batch,
    history_pred: Option<&Prediction>,
    alpha: f64,
) -> Result<(f64, ParamVector)> {
    if alpha < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "constraint weight alpha must be >= 0, got {alpha}"
        )));
    }
    check_labels(batch.labels(), spec.class_count())?;
    let trace = forward_trace(spec, params, batch)?;
    let probs = &trace.probabilities;
    let batch_size = batch.len() as f64;
    let classes = spec.class_count();

    let constrained = alpha != 0.0 && history_pred.is_some();
    let mut loss = ce_from_probs(probs, batch.labels());

    // Output-layer logit gradient. Plain CE: (p - y)/B. With the constraint:
    // ((1+a)p - y - a*qhat)/B, the softmax-CE form against the smoothed target.
    let mut delta = probs.clone();
    if constrained {
        let hist = history_pred.expect("checked above");
        if hist.rows() != batch.len() || hist.classes() != classes {
            return Err(Error::ShapeMismatch {
                left: format!("{}x{}", hist.rows(), hist.classes()),
                right: format!("{}x{}", batch.len(), classes),
            });
        }
        let hist_probs = hist.probabilities();
        loss += alpha * kl_from_probs(&hist_probs.to_owned(), probs);
        for (i, mut row) in delta.axis_iter_mut(Axis(0)).enumerate() {
            for (c, d) in row.iter_mut().enumerate() {
                *d = (1.0 + alpha) * *d - alpha * hist_probs[[i, c]];
            }
            row[batch.labels()[i]] -= 1.0;
            row.mapv_inplace(|d| d / batch_size);
        }
    } else {
        for (i, mut row) in delta.axis_iter_mut(Axis(0)).enumerate() {
            row[batch.labels()[i]] -= 1.0;
            row.mapv_inplace(|d| d / batch_size);
        }
    }

    // Backpropagate through the dense stack.
    let layout = params.layout_arc();
    let mut grad_values = vec![0.0; layout.total_len()];
    for l in (0..spec.layer_count()).rev() {
        let input = &trace.activations[l];
        let d_w = delta.t().dot(input);
        let d_b = delta.sum_axis(Axis(0));
        let w_entry = 2 * l;
        let w_off = layout.offset(w_entry);
        let b_off = layout.offset(w_entry + 1);
        grad_values[w_off..w_off + d_w.len()]
            .copy_from_slice(d_w.as_standard_layout().as_slice().expect("contiguous"));
        grad_values[b_off..b_off + d_b.len()].copy_from_slice(d_b.as_slice().expect("contiguous"));
        if l > 0 {
            let shape = &layout.entries()[w_entry].shape;
            let w = ndarray::ArrayView2::from_shape(
                (shape[0], shape[1]),
                params.entry_slice(w_entry),
            )
            .expect("layout shape matches slice");
            let mut upstream = delta.dot(&w);
            // Rectifier mask: activation > 0 iff pre-activation > 0.
            upstream
                .iter_mut()
                .zip(trace.activations[l].iter())
                .for_each(|(u, &a)| {
                    if a <= 0.0 {
                        *u = 0.0;
                    }
                });
            delta = upstream;
        }
    }

    let grad = ParamVector::from_values(layout, grad_values).expect("layout sized gradient");
    Ok((loss, grad))
}

/// Analytic gradient of the (constrained) loss with respect to every
/// parameter, in the same layout as `params`.
pub fn grad(
    spec: &NetworkSpec,
    params: &ParamVector,
    batch: &Batch,
    history_pred: Option<&Prediction>,
    alpha: f64,
) -> Result<ParamVector> {
    loss_and_grad(spec, params, batch, history_pred, alpha).map(|(_, g)| g)
}

/// One plain gradient-descent step: `params - lr * gradient`.
pub fn sgd_step(params: &ParamVector, gradient: &ParamVector, lr: f64) -> Result<ParamVector> {
    params.check_same_layout(gradient)?;
    let values = params
        .values()
        .iter()
        .zip(gradient.values())
        .map(|(p, g)| p - lr * g)
        .collect();
    ParamVector::from_values(params.layout_arc(), values)
}

//! Minimal dense neural-network engine with exact analytic gradients.

pub mod loss;
pub mod network;
pub mod params;

pub use loss::{
    constrained_loss, cross_entropy, grad, kl_divergence, loss_and_grad, sgd_step, PROB_CLIP,
};
pub use network::{forward, forward_hidden, Batch, NetworkSpec, Prediction};
pub use params::{LayoutEntry, ParamLayout, ParamVector};

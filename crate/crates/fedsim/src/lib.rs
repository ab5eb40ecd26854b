//! Deterministic single-process simulator for personalized federated
//! learning.
//!
//! The simulator trains a shared meta-initialization over synthetic or
//! CSV-loaded non-IID client shards and personalizes it per client. Local
//! adaptation strategies include an elastically-constrained meta-learner
//! (`fedec`: cross-entropy plus a KL pull toward each client's historical
//! model predictions), its L2-penalty and unconstrained ablations, federated
//! averaging, and a first-order Per-FedAvg baseline. Every run is a pure
//! function of its configuration: all randomness derives from one master
//! seed, and parallel execution is bit-identical to serial execution.

// Negated float comparisons in validation (`!(x > 0.0)`) are deliberate:
// they reject NaN, which the suggested `x <= 0.0` would wave through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod nncore;
pub mod orchestrator;
pub mod seeds;
pub mod strategies;

pub use error::{Error, Result};

//! Deterministic desk-scale simulator for federated learning under
//! dynamic client participation.
//!
//! The crate is organized bottom-up:
//!
//! * [`numkit`]: dense f64 tensors, a splittable deterministic RNG, a small
//!   MLP with manual backprop, losses, SGD, and a binary checkpoint codec.
//! * [`datagen`]: synthetic Gaussian-cluster classification data and a
//!   Dirichlet label-skew partitioner.
//! * [`participation`]: client availability models (static, timed-random,
//!   Markovian, programmed traces).
//! * [`flcore`]: client/server round loop with FedAvg, FedProx and
//!   SCAFFOLD local updates plus a plugin seam for server-side extensions.
//! * [`kpfl`]: the knowledge-pool plugin (dual-age weighting, age-aware
//!   aggregation, generative knowledge distillation).
//! * [`metrics`]: windowed evaluation, intransigence and instability.
//! * [`harness`]: TOML-configured experiment runner, output writers, the
//!   experiment matrix and the report view.
//!
//! Everything is deterministic given a seed: same seed, same byte-for-byte
//! outputs.

pub mod datagen;
mod error;
pub mod flcore;
pub mod harness;
pub mod kpfl;
pub mod metrics;
pub mod numkit;
pub mod participation;

pub use error::{Error, Result};

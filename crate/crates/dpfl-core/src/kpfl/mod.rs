//! Knowledge-pool federated learning plugin.
//!
//! The server keeps every client's latest model in a pool together with
//! participation bookkeeping. Aggregation weights combine a dual-age decay
//! (recent joiners and recently-departed clients count for more than stale
//! ones) with a data-bias term, so idle clients keep contributing their
//! knowledge instead of being dropped. A conditional generator is trained
//! against the pool (age-weighted cross-entropy, a contrastive pull toward
//! classifier-head class centers, and a diversity bonus) and its samples
//! drive an ensemble distillation step that refines the aggregated model.

mod generator;
mod losses;
mod plugin;
mod pool;

use serde::{Deserialize, Serialize};

pub use generator::{sample_generator, sample_labels, sample_latent, Generator, GeneratorSpec};
pub use losses::{distill, ensemble_logits, generator_loss, GenLossParts};
pub use plugin::KpflPlugin;
pub use pool::{age_weight, class_weight, data_bias_weight, ClientActivity, KnowledgePool, PoolEntry, PoolUpdate};

use crate::{Error, Result};

/// Knowledge-pool settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KpflConfig {
    /// Age decay rate for active clients (non-positive).
    pub lambda_aa: f64,
    /// Age decay rate for idle clients (non-positive).
    pub lambda_ia: f64,
    /// Weight of the age-aware cross-entropy generator loss.
    pub gamma_ce: f64,
    /// Weight of the contrastive generator loss.
    pub gamma_ctr: f64,
    /// Weight of the diversity generator loss.
    pub gamma_div: f64,
    /// Contrastive softmax temperature.
    pub tau_temp: f64,
    pub generator: GeneratorSpec,
    /// Generator SGD steps per round; 0 disables generator training.
    pub generator_steps: usize,
    /// Distillation SGD steps per round; 0 disables refinement.
    pub distill_steps: usize,
    /// Batch size for generated samples.
    pub gen_batch: usize,
    pub generator_lr: f64,
    pub distill_lr: f64,
    /// Softmax temperature applied to both sides of the distillation KL.
    pub distill_temperature: f64,
}

impl Default for KpflConfig {
    fn default() -> Self {
        KpflConfig {
            lambda_aa: -0.1,
            lambda_ia: -0.1,
            gamma_ce: 1.0,
            gamma_ctr: 0.5,
            gamma_div: 0.5,
            tau_temp: 0.5,
            generator: GeneratorSpec::default(),
            generator_steps: 40,
            distill_steps: 20,
            gen_batch: 64,
            generator_lr: 0.01,
            distill_lr: 0.01,
            distill_temperature: 1.0,
        }
    }
}

impl KpflConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_aa > 0.0 || !self.lambda_aa.is_finite() {
            return Err(Error::Config(format!(
                "lambda_aa must be non-positive, got {}",
                self.lambda_aa
            )));
        }
        if self.lambda_ia > 0.0 || !self.lambda_ia.is_finite() {
            return Err(Error::Config(format!(
                "lambda_ia must be non-positive, got {}",
                self.lambda_ia
            )));
        }
        for (name, g) in [
            ("gamma_ce", self.gamma_ce),
            ("gamma_ctr", self.gamma_ctr),
            ("gamma_div", self.gamma_div),
        ] {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {g}")));
            }
        }
        if !(self.tau_temp > 0.0 && self.tau_temp.is_finite()) {
            return Err(Error::Config("tau_temp must be positive".into()));
        }
        if !(self.distill_temperature > 0.0 && self.distill_temperature.is_finite()) {
            return Err(Error::Config("distill_temperature must be positive".into()));
        }
        if self.gen_batch < 2 {
            return Err(Error::Config(
                "gen_batch must be at least 2 (diversity needs pairs)".into(),
            ));
        }
        for (name, lr) in [("generator_lr", self.generator_lr), ("distill_lr", self.distill_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        self.generator.validate()
    }
}

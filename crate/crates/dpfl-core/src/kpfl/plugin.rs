use std::collections::BTreeMap;

use crate::flcore::{ClientUpdate, RoundContext, RoundPlugin};
use crate::numkit::{sgd_step, MlpModel, Rng, SgdConfig, SgdState, Tensor2};
use crate::Result;

use super::generator::{sample_labels, sample_latent, Generator};
use super::losses::{distill, generator_loss};
use super::pool::{ClientActivity, KnowledgePool, PoolUpdate};
use super::KpflConfig;

/// Knowledge-pool strategy add-on. Replaces sample-count aggregation with
/// dual-age pool weighting and, when configured, refines each round's
/// aggregate by distilling the pool ensemble over generated samples.
pub struct KpflPlugin {
    cfg: KpflConfig,
    pool: KnowledgePool,
    generator: Generator,
    rng: Rng,
    last_diag: BTreeMap<String, f64>,
}

impl KpflPlugin {
    /// `class_totals` fixes the pool weighting denominators; `input_dim` is
    /// the classifier input width the generator must produce.
    pub fn new(cfg: KpflConfig, class_totals: Vec<usize>, input_dim: usize, rng: Rng) -> Result<Self> {
        cfg.validate()?;
        let num_classes = class_totals.len();
        let mut init_rng = rng.split("gen/init");
        let generator = Generator::init(&cfg.generator, num_classes, input_dim, &mut init_rng)?;
        Ok(KpflPlugin {
            cfg,
            pool: KnowledgePool::new(class_totals),
            generator,
            rng,
            last_diag: BTreeMap::new(),
        })
    }

    pub fn pool(&self) -> &KnowledgePool {
        &self.pool
    }

    pub fn config(&self) -> &KpflConfig {
        &self.cfg
    }

    fn train_generator(&mut self, t: usize, global: &MlpModel) -> Result<()> {
        let mut rng = self.rng.split(&format!("gen/round/{t}"));
        let sgd = SgdConfig {
            learning_rate: self.cfg.generator_lr,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: self.cfg.gen_batch,
        };
        let mut state = SgdState::zeros_like(&self.generator.params());
        let mut last = None;
        for _ in 0..self.cfg.generator_steps {
            let z = sample_latent(self.cfg.gen_batch, self.generator.latent_dim(), &mut rng);
            let labels = sample_labels(self.cfg.gen_batch, self.pool.class_totals(), &mut rng)?;
            let (parts, grads) =
                generator_loss(&self.generator, &z, &labels, &self.pool, global, t, &self.cfg)?;
            let mut params = self.generator.params_mut();
            sgd_step(&mut params, &grads, &sgd, &mut state)?;
            last = Some(parts);
        }
        if let Some(parts) = last {
            self.last_diag.insert("gen_loss".into(), parts.total);
            self.last_diag.insert("gen_ce".into(), parts.ce);
            self.last_diag.insert("gen_ctr".into(), parts.contrastive);
            self.last_diag.insert("gen_div".into(), parts.diversity);
        }
        Ok(())
    }
}

impl RoundPlugin for KpflPlugin {
    fn aggregate(
        &mut self,
        ctx: &RoundContext<'_>,
        updates: &[ClientUpdate],
    ) -> Result<Option<(MlpModel, Option<Vec<Tensor2>>)>> {
        self.last_diag.clear();
        let pool_updates: Vec<PoolUpdate> = updates
            .iter()
            .map(|u| PoolUpdate {
                id: u.id,
                model: u.model.clone(),
                variate: u.new_variate.clone(),
                counts: ctx.counts[u.id].clone(),
            })
            .collect();
        self.pool.update(ctx.round, ctx.active_ids, pool_updates)?;
        let (model, variate) = self.pool.aggregate(ctx.round, &self.cfg)?;
        Ok(Some((model, variate)))
    }

    fn refine(&mut self, ctx: &RoundContext<'_>, aggregated: &MlpModel) -> Result<Option<MlpModel>> {
        if self.pool.is_empty() {
            return Ok(None);
        }
        if self.cfg.generator_steps > 0 {
            self.train_generator(ctx.round, aggregated)?;
        }
        if self.cfg.distill_steps == 0 {
            return Ok(None);
        }
        let mut rng = self.rng.split(&format!("distill/round/{}", ctx.round));
        let (refined, loss) = distill(
            aggregated,
            &self.generator,
            &self.pool,
            ctx.round,
            &self.cfg,
            &mut rng,
        )?;
        self.last_diag.insert("distill_loss".into(), loss);
        Ok(Some(refined))
    }

    fn observe_empty_round(&mut self, t: usize) -> Result<()> {
        self.last_diag.clear();
        // Ages still advance: everyone previously active turns idle.
        self.pool.update(t, &[], Vec::new())
    }

    fn diagnostics(&self, out: &mut BTreeMap<String, f64>) {
        let active = self
            .pool
            .entries()
            .filter(|(_, e)| e.activity == ClientActivity::Active)
            .count();
        out.insert("pool_active".into(), active as f64);
        out.insert("pool_idle".into(), (self.pool.len() - active) as f64);
        for (k, v) in &self.last_diag {
            out.insert(k.clone(), *v);
        }
    }

    fn snapshot(&self, t: usize) -> Option<serde_json::Value> {
        Some(self.pool.snapshot(t, &self.cfg))
    }
}

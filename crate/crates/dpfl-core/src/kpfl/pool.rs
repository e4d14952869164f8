use std::collections::BTreeMap;

use crate::flcore::{aggregate_models, aggregate_param_sets};
use crate::numkit::{MlpModel, Tensor2};
use crate::{Error, Result};

use super::KpflConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClientActivity {
    Active,
    Idle,
}

/// One client's knowledge: its latest model, optional control variate,
/// class counts, and participation bookkeeping.
#[derive(Clone, Debug)]
pub struct PoolEntry {
    pub model: MlpModel,
    pub variate: Option<Vec<Tensor2>>,
    pub counts: Vec<usize>,
    /// Round of the most recent activity transition (join or departure).
    pub tau: usize,
    pub activity: ClientActivity,
    /// Round this client first contributed.
    pub first_seen: usize,
}

impl PoolEntry {
    /// Rounds spent in the current activity state as of round `t`.
    pub fn age(&self, t: usize) -> usize {
        debug_assert!(t >= self.tau);
        t.saturating_sub(self.tau)
    }
}

/// Dual-age weight: `exp(lambda_aa * age)` while active, `exp(lambda_ia *
/// age)` while idle. Age 0 always weighs 1.
pub fn age_weight(entry: &PoolEntry, t: usize, lambda_aa: f64, lambda_ia: f64) -> f64 {
    let age = entry.age(t) as f64;
    match entry.activity {
        ClientActivity::Active => (lambda_aa * age).exp(),
        ClientActivity::Idle => (lambda_ia * age).exp(),
    }
}

/// Data-bias weight: the client's summed share of each class,
/// `sum_j counts[j] / class_totals[j]`. A client holding all data of all
/// classes scores the class count.
pub fn data_bias_weight(counts: &[usize], class_totals: &[usize]) -> f64 {
    counts
        .iter()
        .zip(class_totals)
        .filter(|(_, &total)| total > 0)
        .map(|(&c, &total)| c as f64 / total as f64)
        .sum()
}

/// Per-class distillation weight before normalization:
/// `age_weight + counts[y] / class_totals[y]`. Empty classes contribute no
/// share.
pub fn class_weight(age_weight: f64, counts: &[usize], class_totals: &[usize], y: usize) -> f64 {
    let share = if class_totals[y] > 0 {
        counts[y] as f64 / class_totals[y] as f64
    } else {
        0.0
    };
    age_weight + share
}

/// Payload for one client's pool refresh.
#[derive(Clone, Debug)]
pub struct PoolUpdate {
    pub id: usize,
    pub model: MlpModel,
    pub variate: Option<Vec<Tensor2>>,
    pub counts: Vec<usize>,
}

/// Server-side knowledge pool over all clients ever seen.
#[derive(Clone, Debug)]
pub struct KnowledgePool {
    entries: BTreeMap<usize, PoolEntry>,
    class_totals: Vec<usize>,
    total_samples: usize,
}

impl KnowledgePool {
    /// `class_totals` are the federation-wide train counts per class; they
    /// also fix the denominator of the sample-share weight.
    pub fn new(class_totals: Vec<usize>) -> Self {
        let total_samples = class_totals.iter().sum();
        KnowledgePool {
            entries: BTreeMap::new(),
            class_totals,
            total_samples,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&PoolEntry> {
        self.entries.get(&id)
    }

    /// Entries in ascending client id.
    pub fn entries(&self) -> impl Iterator<Item = (usize, &PoolEntry)> {
        self.entries.iter().map(|(&id, e)| (id, e))
    }

    pub fn class_totals(&self) -> &[usize] {
        &self.class_totals
    }

    pub fn total_samples(&self) -> usize {
        self.total_samples
    }

    /// Applies round `t`: refreshes entries for active clients (stamping a
    /// join transition for new or returning ones) and stamps a departure
    /// transition on entries that stopped participating. `active_ids` and
    /// update ids must match exactly.
    pub fn update(&mut self, t: usize, active_ids: &[usize], updates: Vec<PoolUpdate>) -> Result<()> {
        if updates.len() != active_ids.len()
            || !updates.iter().all(|u| active_ids.contains(&u.id))
        {
            let update_ids: Vec<usize> = updates.iter().map(|u| u.id).collect();
            return Err(Error::InvalidArgument(format!(
                "pool update ids {update_ids:?} do not match active set {active_ids:?}"
            )));
        }
        for update in updates {
            if update.counts.len() != self.class_totals.len() {
                return Err(Error::shape(
                    format!("pool counts for client {}", update.id),
                    format!("{} classes", self.class_totals.len()),
                    format!("{}", update.counts.len()),
                ));
            }
            match self.entries.get_mut(&update.id) {
                Some(entry) => {
                    if entry.activity == ClientActivity::Idle {
                        entry.activity = ClientActivity::Active;
                        entry.tau = t;
                    }
                    entry.model = update.model;
                    entry.variate = update.variate;
                    entry.counts = update.counts;
                }
                None => {
                    self.entries.insert(
                        update.id,
                        PoolEntry {
                            model: update.model,
                            variate: update.variate,
                            counts: update.counts,
                            tau: t,
                            activity: ClientActivity::Active,
                            first_seen: t,
                        },
                    );
                }
            }
        }
        for (&id, entry) in self.entries.iter_mut() {
            if entry.activity == ClientActivity::Active && !active_ids.contains(&id) {
                entry.activity = ClientActivity::Idle;
                entry.tau = t;
            }
        }
        Ok(())
    }

    /// Sample-share weight `epsilon_i`: the client's fraction of all train
    /// samples.
    pub fn epsilon(&self, entry: &PoolEntry) -> f64 {
        entry.counts.iter().sum::<usize>() as f64 / self.total_samples as f64
    }

    /// Raw aggregation weight `W_i = age_weight * epsilon + data_bias`.
    pub fn raw_weight(&self, entry: &PoolEntry, t: usize, cfg: &KpflConfig) -> f64 {
        age_weight(entry, t, cfg.lambda_aa, cfg.lambda_ia) * self.epsilon(entry)
            + data_bias_weight(&entry.counts, &self.class_totals)
    }

    /// Pool aggregation at round `t`: the weighted model average and, when
    /// every entry carries a control variate, the matching variate average.
    pub fn aggregate(&self, t: usize, cfg: &KpflConfig) -> Result<(MlpModel, Option<Vec<Tensor2>>)> {
        if self.entries.is_empty() {
            return Err(Error::EmptyRound);
        }
        let models: Vec<&MlpModel> = self.entries.values().map(|e| &e.model).collect();
        let weights: Vec<f64> = self
            .entries
            .values()
            .map(|e| self.raw_weight(e, t, cfg))
            .collect();
        let model = aggregate_models(&models, &weights)?;
        let variate = if self.entries.values().all(|e| e.variate.is_some()) {
            let sets: Vec<&[Tensor2]> = self
                .entries
                .values()
                .map(|e| e.variate.as_deref().expect("checked"))
                .collect();
            Some(aggregate_param_sets(&sets, &weights)?)
        } else {
            None
        };
        Ok((model, variate))
    }

    /// Per-sample distillation weights for label `y` at round `t`,
    /// normalized over pool entries, ascending client id. Each raw weight
    /// is `age_weight + counts[y] / class_totals[y]`.
    pub fn class_weights(&self, t: usize, y: usize, cfg: &KpflConfig) -> Result<Vec<(usize, f64)>> {
        if self.entries.is_empty() {
            return Err(Error::EmptyRound);
        }
        if y >= self.class_totals.len() {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {} classes",
                self.class_totals.len()
            )));
        }
        let mut raw: Vec<(usize, f64)> = self
            .entries
            .iter()
            .map(|(&id, e)| {
                let aw = age_weight(e, t, cfg.lambda_aa, cfg.lambda_ia);
                (id, class_weight(aw, &e.counts, &self.class_totals, y))
            })
            .collect();
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        debug_assert!(total > 0.0, "age weights are strictly positive");
        for (_, w) in raw.iter_mut() {
            *w /= total;
        }
        Ok(raw)
    }

    /// Label distribution `p(y) = class_totals[y] / total` for generator
    /// sampling.
    pub fn label_distribution(&self) -> Vec<f64> {
        self.class_totals
            .iter()
            .map(|&n| n as f64 / self.total_samples as f64)
            .collect()
    }

    /// Deterministic JSON snapshot of the pool bookkeeping at round `t`.
    pub fn snapshot(&self, t: usize, cfg: &KpflConfig) -> serde_json::Value {
        let entries: Vec<serde_json::Value> = self
            .entries
            .iter()
            .map(|(&id, e)| {
                serde_json::json!({
                    "client": id,
                    "activity": match e.activity {
                        ClientActivity::Active => "active",
                        ClientActivity::Idle => "idle",
                    },
                    "tau": e.tau,
                    "age": e.age(t),
                    "first_seen": e.first_seen,
                    "age_weight": age_weight(e, t, cfg.lambda_aa, cfg.lambda_ia),
                    "epsilon": self.epsilon(e),
                    "data_bias_weight": data_bias_weight(&e.counts, &self.class_totals),
                    "raw_weight": self.raw_weight(e, t, cfg),
                    "counts": e.counts,
                })
            })
            .collect();
        serde_json::json!({
            "round": t,
            "size": self.entries.len(),
            "entries": entries,
        })
    }
}

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use super::{aggregate_updates, local_update, ClientState, ClientUpdate, StrategyConfig, StrategyKind};
use crate::datagen::{Dataset, Partition};
use crate::numkit::{accuracy, add_param_sets, scale_param_set, MlpModel, Rng, Tensor2};
use crate::participation::{sample_round, ParticipationModel, ParticipationState};
use crate::{Error, Result};

/// Immutable facts handed to plugins each round.
pub struct RoundContext<'a> {
    pub round: usize,
    pub active_ids: &'a [usize],
    /// Per-client class counts for every client.
    pub counts: &'a [Vec<usize>],
    /// Train samples of each class across all clients.
    pub class_totals: &'a [usize],
    pub total_samples: usize,
    pub num_clients: usize,
}

/// Server-side extension seam. The default hooks leave every round on the
/// base strategy path.
pub trait RoundPlugin {
    /// Replaces the default aggregation. Returning `Some((model, variate))`
    /// installs that pair; `None` falls through to sample-count FedAvg.
    fn aggregate(
        &mut self,
        _ctx: &RoundContext<'_>,
        _updates: &[ClientUpdate],
    ) -> Result<Option<(MlpModel, Option<Vec<Tensor2>>)>> {
        Ok(None)
    }

    /// Post-aggregation refinement (e.g. distillation). `None` keeps the
    /// aggregate as the next global model.
    fn refine(&mut self, _ctx: &RoundContext<'_>, _aggregated: &MlpModel) -> Result<Option<MlpModel>> {
        Ok(None)
    }

    /// Called instead of the hooks above when no client is active.
    fn observe_empty_round(&mut self, _t: usize) -> Result<()> {
        Ok(())
    }

    /// Scalar diagnostics merged into the round record.
    fn diagnostics(&self, _out: &mut BTreeMap<String, f64>) {}

    /// Optional JSON state snapshot for auditing.
    fn snapshot(&self, _t: usize) -> Option<serde_json::Value> {
        None
    }
}

/// One row of the run log. Wall time stays in memory only; serialized
/// outputs must be identical across reruns.
#[derive(Clone, Debug)]
pub struct RoundRecord {
    pub round: usize,
    pub active_ids: Vec<usize>,
    /// Test accuracy of the installed global model after this round.
    pub psi: f64,
    pub wall: Duration,
    pub diagnostics: BTreeMap<String, f64>,
}

/// Mutable run state: the global model, SCAFFOLD server variate, client
/// bookkeeping, and the participation state.
pub struct Server {
    pub global: MlpModel,
    pub variate: Option<Vec<Tensor2>>,
    pub clients: Vec<ClientState>,
    pub round: usize,
    pub participation_state: ParticipationState,
}

impl Server {
    pub fn new(global: MlpModel, partition: &Partition) -> Self {
        let clients = partition
            .client_indices
            .iter()
            .zip(&partition.counts)
            .enumerate()
            .map(|(id, (indices, counts))| ClientState::new(id, indices.clone(), counts.clone()))
            .collect();
        Server {
            global,
            variate: None,
            clients,
            round: 0,
            participation_state: ParticipationState::new(),
        }
    }
}

/// Drives rounds against a fixed dataset/partition/strategy. RNG use is
/// keyed by round and client id, so the sampled participation never
/// perturbs training randomness and vice versa.
pub struct RoundDriver<'a> {
    dataset: &'a Dataset,
    strategy: StrategyConfig,
    participation: ParticipationModel,
    counts: Vec<Vec<usize>>,
    class_totals: Vec<usize>,
    total_samples: usize,
    num_clients: usize,
    train_root: Rng,
    part_root: Rng,
}

impl<'a> RoundDriver<'a> {
    pub fn new(
        dataset: &'a Dataset,
        partition: &Partition,
        strategy: StrategyConfig,
        participation: ParticipationModel,
        train_root: Rng,
        part_root: Rng,
    ) -> Result<Self> {
        participation.validate(partition.num_clients())?;
        if partition.num_classes() != dataset.num_classes {
            return Err(Error::Config(format!(
                "partition covers {} classes, dataset has {}",
                partition.num_classes(),
                dataset.num_classes
            )));
        }
        Ok(RoundDriver {
            dataset,
            strategy,
            participation,
            counts: partition.counts.clone(),
            class_totals: partition.class_totals(),
            total_samples: partition.total_samples(),
            num_clients: partition.num_clients(),
            train_root,
            part_root,
        })
    }

    pub fn strategy(&self) -> &StrategyConfig {
        &self.strategy
    }

    pub fn num_clients(&self) -> usize {
        self.num_clients
    }

    fn evaluate(&self, model: &MlpModel) -> Result<f64> {
        accuracy(model, &self.dataset.test_x, &self.dataset.test_y)
    }

    /// Runs one round: sample participation, train active clients,
    /// aggregate (plugin or default), refine (plugin), evaluate.
    ///
    /// Rounds with no active clients carry the previous global model
    /// forward and still evaluate, so the accuracy series has one entry per
    /// round.
    pub fn run_round(
        &self,
        server: &mut Server,
        mut plugin: Option<&mut dyn RoundPlugin>,
    ) -> Result<RoundRecord> {
        let t = server.round;
        let start = Instant::now();
        let mut part_rng = self.part_root.split(&format!("round/{t}"));
        let mut active = sample_round(
            &self.participation,
            self.num_clients,
            t,
            &mut server.participation_state,
            &mut part_rng,
        )?;
        // Clients that own no data can never contribute an update.
        active.retain(|&i| !server.clients[i].indices.is_empty());

        let mut diagnostics = BTreeMap::new();

        if active.is_empty() {
            if let Some(p) = plugin.as_deref_mut() {
                p.observe_empty_round(t)?;
                p.diagnostics(&mut diagnostics);
            }
            let psi = self.evaluate(&server.global)?;
            server.round += 1;
            return Ok(RoundRecord {
                round: t,
                active_ids: Vec::new(),
                psi,
                wall: start.elapsed(),
                diagnostics,
            });
        }

        let mut updates = Vec::with_capacity(active.len());
        for &id in &active {
            let mut rng = self.train_root.split(&format!("round/{t}/client/{id}"));
            let update = local_update(
                &server.clients[id],
                &server.global,
                server.variate.as_deref(),
                self.dataset,
                &self.strategy,
                &mut rng,
            )?;
            server.clients[id].last_model = Some(update.model.clone());
            if update.new_variate.is_some() {
                server.clients[id].variate = update.new_variate.clone();
            }
            updates.push(update);
        }

        let ctx = RoundContext {
            round: t,
            active_ids: &active,
            counts: &self.counts,
            class_totals: &self.class_totals,
            total_samples: self.total_samples,
            num_clients: self.num_clients,
        };

        let plugged = match plugin.as_deref_mut() {
            Some(p) => p.aggregate(&ctx, &updates)?,
            None => None,
        };
        let aggregated = match plugged {
            Some((model, variate)) => {
                if variate.is_some() {
                    server.variate = variate;
                }
                model
            }
            None => {
                if self.strategy.kind == StrategyKind::Scaffold {
                    // c <- c + (1/N) sum of client variate deltas.
                    let mut acc: Option<Vec<Tensor2>> = None;
                    for u in &updates {
                        if let Some(delta) = &u.variate_delta {
                            acc = Some(match acc {
                                None => delta.clone(),
                                Some(a) => add_param_sets(&a, delta, 1.0)?,
                            });
                        }
                    }
                    if let Some(mut acc) = acc {
                        scale_param_set(&mut acc, 1.0 / self.num_clients as f64);
                        server.variate = Some(match server.variate.take() {
                            None => acc,
                            Some(c) => add_param_sets(&c, &acc, 1.0)?,
                        });
                    }
                }
                aggregate_updates(&updates)?
            }
        };

        let acc_theta = self.evaluate(&aggregated)?;
        let refined = match plugin.as_deref_mut() {
            Some(p) => p.refine(&ctx, &aggregated)?,
            None => None,
        };
        let psi = match refined {
            Some(model) => {
                server.global = model;
                self.evaluate(&server.global)?
            }
            None => {
                server.global = aggregated;
                acc_theta
            }
        };

        let total_weight: f64 = updates.iter().map(|u| u.sample_count as f64).sum();
        let train_loss: f64 = updates
            .iter()
            .map(|u| u.train_loss * u.sample_count as f64)
            .sum::<f64>()
            / total_weight;
        diagnostics.insert("acc_theta".into(), acc_theta);
        diagnostics.insert("train_loss".into(), train_loss);
        if let Some(p) = plugin.as_deref_mut() {
            p.diagnostics(&mut diagnostics);
        }

        server.round += 1;
        Ok(RoundRecord {
            round: t,
            active_ids: active,
            psi,
            wall: start.elapsed(),
            diagnostics,
        })
    }
}

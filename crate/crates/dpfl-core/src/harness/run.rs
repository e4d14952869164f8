use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use serde_json::json;

use crate::datagen::{generate, partition_dirichlet, partition_equal, Dataset, Partition};
use crate::flcore::{RoundDriver, RoundPlugin, RoundRecord, Server, StrategyConfig};
use crate::kpfl::KpflPlugin;
use crate::metrics::{instability, intransigence, windowed_eval, WindowStat};
use crate::numkit::{model_to_bytes, MlpModel, Rng};
use crate::participation::{sample_round, ParticipationModel, ParticipationState, ParticipationTrace};
use crate::{Error, Result};

use super::config::ExperimentConfig;
use super::write_atomic;

/// Everything one seed writes into `summary.json`. Series are full-length
/// (one entry per round); window metrics use the configured trailing
/// window clamped to the run length.
#[derive(Clone, Debug, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub rounds: usize,
    pub num_clients: usize,
    pub strategy: String,
    pub participation: String,
    pub heterogeneity: String,
    pub kpfl: bool,
    pub configured_batch: usize,
    pub effective_batch: usize,
    pub eval_window: usize,
    pub we_final: f64,
    /// Final windowed accuracy of the pre-refinement aggregate; present
    /// only when the knowledge pool is attached.
    pub we_final_theta: Option<f64>,
    /// Mean static-minus-dynamic accuracy gap; absent without a paired
    /// static reference.
    pub idp: Option<f64>,
    /// Instability over the full run; absent when the window has fewer
    /// than two rounds.
    pub id_full: Option<f64>,
    /// Instability over rounds `[rounds/2, rounds)`.
    pub id_second_half: Option<f64>,
    pub id_static_full: Option<f64>,
    pub id_static_second_half: Option<f64>,
    pub psi: Vec<f64>,
    pub psi_static: Option<Vec<f64>>,
    /// Per-round accuracy of the aggregate before refinement; rounds with
    /// no active clients carry the installed model's accuracy.
    pub acc_theta: Option<Vec<f64>>,
}

/// One seed's result plus in-memory wall statistics. Wall time never
/// reaches the serialized artifacts, so reruns stay byte-identical.
#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub summary: SeedSummary,
    /// Total wall time of the dynamic condition.
    pub wall: Duration,
    /// Active-client count summed over the dynamic condition's rounds.
    pub total_active: usize,
}

/// A completed run cell: its directory, per-seed outcomes, and the
/// aggregate written to `aggregate.json`.
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub dir: PathBuf,
    pub label: String,
    pub seeds: Vec<SeedOutcome>,
    pub aggregate: serde_json::Value,
}

struct ConditionRun {
    records: Vec<RoundRecord>,
    final_model: MlpModel,
    snapshots: Vec<(usize, serde_json::Value)>,
}

fn run_condition(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    partition: &Partition,
    strategy: &StrategyConfig,
    participation: ParticipationModel,
    initial: MlpModel,
    root: &Rng,
    want_snapshots: bool,
) -> Result<ConditionRun> {
    let driver = RoundDriver::new(
        dataset,
        partition,
        strategy.clone(),
        participation,
        root.split("train"),
        root.split("part"),
    )?;
    let mut plugin = if cfg.kpfl_enabled {
        Some(KpflPlugin::new(
            cfg.kpfl.clone(),
            partition.class_totals(),
            dataset.train_x.cols(),
            root.split("kpfl"),
        )?)
    } else {
        None
    };
    let mut server = Server::new(initial, partition);
    let mut records = Vec::with_capacity(cfg.rounds);
    let mut snapshots = Vec::new();
    for t in 0..cfg.rounds {
        let record = driver.run_round(
            &mut server,
            plugin.as_mut().map(|p| p as &mut dyn RoundPlugin),
        )?;
        records.push(record);
        if want_snapshots && cfg.snapshot_every > 0 && t % cfg.snapshot_every == 0 {
            if let Some(p) = &plugin {
                if let Some(snap) = RoundPlugin::snapshot(p, t) {
                    snapshots.push((t, snap));
                }
            }
        }
    }
    Ok(ConditionRun {
        records,
        final_model: server.global,
        snapshots,
    })
}

/// Per-round log as CSV. Columns: round, semicolon-joined active ids, the
/// installed model's accuracy, then the union of diagnostic keys in sorted
/// order (missing values stay empty).
pub fn rounds_csv(records: &[RoundRecord]) -> String {
    let mut keys: BTreeSet<&str> = BTreeSet::new();
    for r in records {
        for k in r.diagnostics.keys() {
            keys.insert(k);
        }
    }
    let mut out = String::from("round,active_ids,psi");
    for k in &keys {
        out.push(',');
        out.push_str(k);
    }
    out.push('\n');
    for r in records {
        let ids: Vec<String> = r.active_ids.iter().map(|i| i.to_string()).collect();
        out.push_str(&format!("{},{},{}", r.round, ids.join(";"), r.psi));
        for k in &keys {
            out.push(',');
            if let Some(v) = r.diagnostics.get(*k) {
                out.push_str(&format!("{v}"));
            }
        }
        out.push('\n');
    }
    out
}

fn realized_trace(num_clients: usize, records: &[RoundRecord]) -> Result<ParticipationTrace> {
    let sets: Vec<Vec<usize>> = records.iter().map(|r| r.active_ids.clone()).collect();
    ParticipationTrace::from_active_sets(num_clients, &sets)
}

fn write_condition_artifacts(dir: &Path, num_clients: usize, run: &ConditionRun) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    write_atomic(&dir.join("rounds.csv"), rounds_csv(&run.records).as_bytes())?;
    write_atomic(
        &dir.join("trace.csv"),
        realized_trace(num_clients, &run.records)?
            .to_csv_string()
            .as_bytes(),
    )?;
    write_atomic(&dir.join("global_model.bin"), &model_to_bytes(&run.final_model))?;
    if !run.snapshots.is_empty() {
        let pool_dir = dir.join("pool");
        std::fs::create_dir_all(&pool_dir).map_err(|e| Error::io(pool_dir.display().to_string(), e))?;
        for (t, snap) in &run.snapshots {
            let text = serde_json::to_string_pretty(snap)?;
            write_atomic(&pool_dir.join(format!("round_{t}.json")), text.as_bytes())?;
        }
    }
    Ok(())
}

fn instability_window(psi: &[f64], from: usize, to: usize) -> Option<f64> {
    instability(psi, from, to).ok()
}

fn run_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    participation: &ParticipationModel,
    seed_dir: &Path,
) -> Result<SeedOutcome> {
    let root = Rng::from_seed(seed);
    let dataset = generate(&cfg.dataset, &mut root.split("data"))?;
    let partition = match cfg.partition.resolve_alpha()? {
        Some(alpha) => {
            partition_dirichlet(&dataset, cfg.num_clients, alpha, &mut root.split("partition"))?
        }
        None => partition_equal(&dataset, cfg.num_clients)?,
    };
    let smallest = partition
        .client_sizes()
        .into_iter()
        .filter(|&s| s > 0)
        .min()
        .ok_or_else(|| Error::Degenerate("every client shard is empty".into()))?;
    let mut strategy = cfg.strategy.clone();
    let configured_batch = strategy.sgd.batch_size;
    if smallest < configured_batch {
        strategy.sgd.batch_size = smallest;
        eprintln!(
            "seed {seed}: batch size clamped {configured_batch} -> {smallest} (smallest client shard)"
        );
    }

    let mut dims = vec![dataset.train_x.cols()];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(dataset.num_classes);
    let initial = MlpModel::init(&dims, &mut root.split("init"))?;

    let dynamic = run_condition(
        cfg,
        &dataset,
        &partition,
        &strategy,
        participation.clone(),
        initial.clone(),
        &root,
        true,
    )?;
    let pair_static = cfg.compute_idp && !matches!(participation, ParticipationModel::Static);
    let static_run = if pair_static {
        Some(run_condition(
            cfg,
            &dataset,
            &partition,
            &strategy,
            ParticipationModel::Static,
            initial,
            &root,
            false,
        )?)
    } else {
        None
    };

    let psi: Vec<f64> = dynamic.records.iter().map(|r| r.psi).collect();
    let omega = cfg.eval_window.min(cfg.rounds);
    let we_final = windowed_eval(&psi, omega, WindowStat::Mean, cfg.rounds - 1)?;
    let psi_static: Option<Vec<f64>> = static_run
        .as_ref()
        .map(|s| s.records.iter().map(|r| r.psi).collect());
    let idp = match &psi_static {
        Some(series) => Some(intransigence(&psi, series)?),
        None => None,
    };
    let acc_theta: Option<Vec<f64>> = if cfg.kpfl_enabled {
        Some(
            dynamic
                .records
                .iter()
                .map(|r| r.diagnostics.get("acc_theta").copied().unwrap_or(r.psi))
                .collect(),
        )
    } else {
        None
    };
    let we_final_theta = match &acc_theta {
        Some(series) => Some(windowed_eval(series, omega, WindowStat::Mean, cfg.rounds - 1)?),
        None => None,
    };

    let summary = SeedSummary {
        seed,
        rounds: cfg.rounds,
        num_clients: cfg.num_clients,
        strategy: cfg.strategy.kind.to_string(),
        participation: participation.to_string(),
        heterogeneity: cfg.partition.label(),
        kpfl: cfg.kpfl_enabled,
        configured_batch,
        effective_batch: strategy.sgd.batch_size,
        eval_window: omega,
        we_final,
        we_final_theta,
        idp,
        id_full: instability_window(&psi, 0, cfg.rounds),
        id_second_half: instability_window(&psi, cfg.rounds / 2, cfg.rounds),
        id_static_full: psi_static
            .as_ref()
            .and_then(|s| instability_window(s, 0, cfg.rounds)),
        id_static_second_half: psi_static
            .as_ref()
            .and_then(|s| instability_window(s, cfg.rounds / 2, cfg.rounds)),
        psi,
        psi_static,
        acc_theta,
    };

    write_condition_artifacts(seed_dir, cfg.num_clients, &dynamic)?;
    write_atomic(
        &seed_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    write_atomic(
        &seed_dir.join("partition.csv"),
        partition.to_csv_string().as_bytes(),
    )?;
    write_atomic(
        &seed_dir.join("partition_summary.json"),
        serde_json::to_string_pretty(&partition.summary_json())?.as_bytes(),
    )?;
    if let Some(static_run) = &static_run {
        write_condition_artifacts(&seed_dir.join("static"), cfg.num_clients, static_run)?;
    }

    Ok(SeedOutcome {
        summary,
        wall: dynamic.records.iter().map(|r| r.wall).sum(),
        total_active: dynamic.records.iter().map(|r| r.active_ids.len()).sum(),
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean/std/per-seed for a metric, or `Null` when any seed lacks it.
fn metric_json(per_seed: Vec<Option<f64>>) -> serde_json::Value {
    if per_seed.iter().any(|v| v.is_none()) {
        return serde_json::Value::Null;
    }
    let values: Vec<f64> = per_seed.into_iter().map(|v| v.expect("checked")).collect();
    let (mean, std) = mean_std(&values);
    json!({ "mean": mean, "std": std, "per_seed": values })
}

fn aggregate_json(cfg: &ExperimentConfig, outcomes: &[SeedOutcome]) -> serde_json::Value {
    let pick =
        |f: &dyn Fn(&SeedSummary) -> Option<f64>| -> Vec<Option<f64>> {
            outcomes.iter().map(|o| f(&o.summary)).collect()
        };
    json!({
        "name": cfg.name,
        "cell": cfg.cell_label(),
        "strategy": cfg.strategy.kind.to_string(),
        "participation": cfg.participation.model,
        "heterogeneity": cfg.partition.label(),
        "kpfl": cfg.kpfl_enabled,
        "rounds": cfg.rounds,
        "num_clients": cfg.num_clients,
        "seeds": outcomes.iter().map(|o| o.summary.seed).collect::<Vec<u64>>(),
        "metrics": {
            "we_final": metric_json(pick(&|s| Some(s.we_final))),
            "we_final_theta": metric_json(pick(&|s| s.we_final_theta)),
            "idp": metric_json(pick(&|s| s.idp)),
            "id_full": metric_json(pick(&|s| s.id_full)),
            "id_second_half": metric_json(pick(&|s| s.id_second_half)),
            "id_static_full": metric_json(pick(&|s| s.id_static_full)),
            "id_static_second_half": metric_json(pick(&|s| s.id_static_second_half)),
        },
    })
}

/// Runs one configuration cell over all its seeds and writes the artifact
/// directory: `<out_root>/<name>/<cell_label>/seed_<s>/...` plus a
/// cell-level `aggregate.json`.
pub fn run_experiment(cfg: &ExperimentConfig, out_root: &Path) -> Result<CellOutcome> {
    cfg.validate()?;
    let participation = cfg.participation.build()?;
    if let ParticipationModel::Programmed { trace } = &participation {
        if trace.rounds() < cfg.rounds {
            return Err(Error::Config(format!(
                "trace covers {} rounds, run needs {}",
                trace.rounds(),
                cfg.rounds
            )));
        }
    }
    let label = cfg.cell_label();
    let dir = out_root.join(&cfg.name).join(&label);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let mut outcomes = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let seed_dir = dir.join(format!("seed_{seed}"));
        let outcome = run_seed(cfg, seed, &participation, &seed_dir)?;
        eprintln!(
            "{label} seed {seed}: we_final={:.2} idp={:?}",
            outcome.summary.we_final, outcome.summary.idp
        );
        outcomes.push(outcome);
    }
    let aggregate = aggregate_json(cfg, &outcomes);
    write_atomic(
        &dir.join("aggregate.json"),
        serde_json::to_string_pretty(&aggregate)?.as_bytes(),
    )?;
    Ok(CellOutcome {
        dir,
        label,
        seeds: outcomes,
        aggregate,
    })
}

/// Expands the matrix section and runs every cell, writing
/// `matrix_index.json` next to the cell directories.
pub fn run_matrix(cfg: &ExperimentConfig, out_root: &Path) -> Result<Vec<CellOutcome>> {
    let cells = cfg.expand_matrix()?;
    let mut outcomes = Vec::with_capacity(cells.len());
    let mut index = Vec::with_capacity(cells.len());
    for cell in &cells {
        let outcome = run_experiment(cell, out_root)?;
        index.push(json!({
            "label": outcome.label,
            "strategy": cell.strategy.kind.to_string(),
            "participation": cell.participation.model,
            "heterogeneity": cell.partition.label(),
            "kpfl": cell.kpfl_enabled,
        }));
        outcomes.push(outcome);
    }
    let index_path = out_root.join(&cfg.name).join("matrix_index.json");
    write_atomic(
        &index_path,
        serde_json::to_string_pretty(&json!({ "cells": index }))?.as_bytes(),
    )?;
    Ok(outcomes)
}

/// Samples the configured participation model for `rounds` rounds using
/// the same seed-derived stream a run would use, so a recorded trace
/// replays the run it came from.
pub fn record_trace(cfg: &ExperimentConfig, seed: u64, rounds: usize) -> Result<ParticipationTrace> {
    let model = cfg.participation.build()?;
    model.validate(cfg.num_clients)?;
    let part_root = Rng::from_seed(seed).split("part");
    let mut state = ParticipationState::new();
    let mut sets = Vec::with_capacity(rounds);
    for t in 0..rounds {
        let mut rng = part_root.split(&format!("round/{t}"));
        sets.push(sample_round(&model, cfg.num_clients, t, &mut state, &mut rng)?);
    }
    ParticipationTrace::from_active_sets(cfg.num_clients, &sets)
}

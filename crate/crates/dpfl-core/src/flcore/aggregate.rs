use super::ClientUpdate;
use crate::numkit::{MlpModel, Tensor2};
use crate::{Error, Result};

/// Normalizes non-negative raw weights to sum to 1.
///
/// Raw weights are first divided by their maximum, so any uniform raw
/// vector collapses to exactly 1.0 per entry and normalizes to exactly
/// `1/n` regardless of the raw scale. Every weighted-aggregation path in
/// the crate funnels through this function; that shared prescaling is what
/// makes differently-sourced but proportional weight vectors aggregate
/// bit-identically.
pub fn normalize_weights(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::EmptyRound);
    }
    if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument(
            "aggregation weights must be finite and non-negative".into(),
        ));
    }
    let max = raw.iter().cloned().fold(0.0f64, f64::max);
    if max == 0.0 {
        return Err(Error::Degenerate("all aggregation weights are zero".into()));
    }
    let scaled: Vec<f64> = raw.iter().map(|w| w / max).collect();
    let total: f64 = scaled.iter().sum();
    Ok(scaled.into_iter().map(|w| w / total).collect())
}

fn check_compatible(a: &MlpModel, b: &MlpModel, index: usize) -> Result<()> {
    let same = a.num_layers() == b.num_layers()
        && a.split_idx() == b.split_idx()
        && a.layers().iter().zip(b.layers()).all(|(x, y)| {
            x.weight.rows() == y.weight.rows()
                && x.weight.cols() == y.weight.cols()
                && x.activation == y.activation
        });
    if !same {
        return Err(Error::shape(
            format!("aggregate model {index}"),
            "architecture of model 0",
            "a different architecture",
        ));
    }
    Ok(())
}

/// Weighted average of models with identical architectures. `raw_weights`
/// are normalized by [`normalize_weights`]; accumulation runs in input
/// order, so callers pass models in ascending client id for reproducible
/// reductions.
pub fn aggregate_models(models: &[&MlpModel], raw_weights: &[f64]) -> Result<MlpModel> {
    if models.is_empty() {
        return Err(Error::EmptyRound);
    }
    if models.len() != raw_weights.len() {
        return Err(Error::shape(
            "aggregate_models weights",
            format!("{}", models.len()),
            format!("{}", raw_weights.len()),
        ));
    }
    let weights = normalize_weights(raw_weights)?;
    for (i, m) in models.iter().enumerate().skip(1) {
        check_compatible(models[0], m, i)?;
    }
    let mut out = models[0].clone();
    for p in out.params_mut() {
        p.scale(0.0);
    }
    for (model, &w) in models.iter().zip(&weights) {
        let mut out_params = out.params_mut();
        for (o, p) in out_params.iter_mut().zip(model.params()) {
            o.add_scaled(p, w)?;
        }
    }
    Ok(out)
}

/// Weighted average of parameter sets (e.g. SCAFFOLD variates) using the
/// same normalization path as model aggregation.
pub fn aggregate_param_sets(sets: &[&[Tensor2]], raw_weights: &[f64]) -> Result<Vec<Tensor2>> {
    if sets.is_empty() {
        return Err(Error::EmptyRound);
    }
    if sets.len() != raw_weights.len() {
        return Err(Error::shape(
            "aggregate_param_sets weights",
            format!("{}", sets.len()),
            format!("{}", raw_weights.len()),
        ));
    }
    let weights = normalize_weights(raw_weights)?;
    let first = sets[0];
    let mut out: Vec<Tensor2> = first
        .iter()
        .map(|t| Tensor2::zeros(t.rows(), t.cols()))
        .collect();
    for (set, &w) in sets.iter().zip(&weights) {
        if set.len() != first.len() {
            return Err(Error::shape(
                "aggregate_param_sets entry",
                format!("{} tensors", first.len()),
                format!("{}", set.len()),
            ));
        }
        for (o, t) in out.iter_mut().zip(set.iter()) {
            o.add_scaled(t, w)?;
        }
    }
    Ok(out)
}

/// Default FedAvg-style aggregation of client updates, weighted by sample
/// count. Updates are processed in ascending client id regardless of input
/// order.
pub fn aggregate_updates(updates: &[ClientUpdate]) -> Result<MlpModel> {
    if updates.is_empty() {
        return Err(Error::EmptyRound);
    }
    let mut order: Vec<usize> = (0..updates.len()).collect();
    order.sort_by_key(|&i| updates[i].id);
    let models: Vec<&MlpModel> = order.iter().map(|&i| &updates[i].model).collect();
    let weights: Vec<f64> = order
        .iter()
        .map(|&i| updates[i].sample_count as f64)
        .collect();
    aggregate_models(&models, &weights)
}

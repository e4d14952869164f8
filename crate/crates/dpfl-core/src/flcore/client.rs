use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::numkit::{
    backward_ce, param_set_zeros_like, sgd_step_model, MlpModel, Rng, SgdConfig, SgdState, Tensor2,
};
use crate::{Error, Result};

/// Local update rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "fedprox")]
    FedProx,
    #[serde(rename = "scaffold")]
    Scaffold,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::FedAvg => "fedavg",
            StrategyKind::FedProx => "fedprox",
            StrategyKind::Scaffold => "scaffold",
        })
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fedavg" => Ok(StrategyKind::FedAvg),
            "fedprox" => Ok(StrategyKind::FedProx),
            "scaffold" => Ok(StrategyKind::Scaffold),
            other => Err(Error::Config(format!(
                "unknown strategy '{other}' (expected fedavg, fedprox, scaffold)"
            ))),
        }
    }
}

/// Strategy settings shared by every client.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// FedProx proximal coefficient; ignored by the other strategies.
    pub prox_mu: f64,
    pub local_epochs: usize,
    pub sgd: SgdConfig,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: StrategyKind::FedAvg,
            prox_mu: 0.01,
            local_epochs: 5,
            sgd: SgdConfig::default(),
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if !(self.prox_mu >= 0.0 && self.prox_mu.is_finite()) {
            return Err(Error::Config(format!(
                "prox_mu must be non-negative, got {}",
                self.prox_mu
            )));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config("local_epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Server-side bookkeeping for one client.
#[derive(Clone, Debug)]
pub struct ClientState {
    pub id: usize,
    /// Train-set indices owned by this client.
    pub indices: Vec<usize>,
    /// Per-class sample counts.
    pub counts: Vec<usize>,
    /// Model from the client's most recent participation.
    pub last_model: Option<MlpModel>,
    /// SCAFFOLD control variate `c_i`; absent until first trained.
    pub variate: Option<Vec<Tensor2>>,
}

impl ClientState {
    pub fn new(id: usize, indices: Vec<usize>, counts: Vec<usize>) -> Self {
        ClientState {
            id,
            indices,
            counts,
            last_model: None,
            variate: None,
        }
    }

    pub fn sample_count(&self) -> usize {
        self.indices.len()
    }
}

/// Result of one client's local training.
#[derive(Clone, Debug)]
pub struct ClientUpdate {
    pub id: usize,
    pub model: MlpModel,
    pub sample_count: usize,
    /// Sample-weighted mean training loss over all local steps.
    pub train_loss: f64,
    /// Number of minibatch steps taken.
    pub steps: usize,
    /// Updated SCAFFOLD variate `c_i'`; None for other strategies.
    pub new_variate: Option<Vec<Tensor2>>,
    /// `c_i' - c_i`, the server-side correction increment.
    pub variate_delta: Option<Vec<Tensor2>>,
}

/// Runs local training for one client starting from the broadcast model.
///
/// FedProx adds `mu * (w - w_global)` to each gradient (skipped entirely
/// when `mu == 0`, so FedProx(0) is bit-identical to FedAvg). SCAFFOLD adds
/// the correction `c - c_i` and refreshes the client variate with option II:
/// `c_i' = c_i - c + (global - local') / (steps * lr)`. SCAFFOLD's local
/// steps run without momentum: option II reads the mean applied gradient
/// off the weight displacement, and momentum would inflate that estimate
/// by up to `1 / (1 - beta)`, which compounds through the correction into
/// divergence under partial participation.
pub fn local_update(
    client: &ClientState,
    global: &MlpModel,
    server_variate: Option<&[Tensor2]>,
    dataset: &Dataset,
    cfg: &StrategyConfig,
    rng: &mut Rng,
) -> Result<ClientUpdate> {
    if client.indices.is_empty() {
        return Err(Error::Degenerate(format!(
            "client {} has no training data",
            client.id
        )));
    }
    if cfg.local_epochs == 0 {
        return Err(Error::Config("local_epochs must be positive".into()));
    }

    let is_scaffold = cfg.kind == StrategyKind::Scaffold;
    // Correction c - c_i, absent when neither side has a variate yet so no
    // spurious zero-additions perturb the arithmetic.
    let correction: Option<Vec<Tensor2>> = if is_scaffold {
        match (server_variate, client.variate.as_deref()) {
            (None, None) => None,
            (c, ci) => {
                let mut corr = match c {
                    Some(c) => c.to_vec(),
                    None => param_set_zeros_like(global),
                };
                if let Some(ci) = ci {
                    for (t, s) in corr.iter_mut().zip(ci) {
                        t.add_scaled(s, -1.0)?;
                    }
                }
                Some(corr)
            }
        }
    } else {
        None
    };

    let mut model = global.clone();
    let mut state = SgdState::for_model(&model);
    let sgd = if is_scaffold {
        SgdConfig {
            momentum: 0.0,
            ..cfg.sgd
        }
    } else {
        cfg.sgd
    };
    let batch = cfg.sgd.batch_size.max(1);
    let mut order = client.indices.clone();
    let mut loss_weighted = 0.0;
    let mut samples_seen = 0usize;
    let mut steps = 0usize;

    for _ in 0..cfg.local_epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(batch) {
            let xb = dataset.train_x.select_rows(chunk)?;
            let yb: Vec<usize> = chunk.iter().map(|&i| dataset.train_y[i]).collect();
            let weights = vec![1.0; yb.len()];
            let (loss, mut grads) = backward_ce(&model, &xb, &yb, &weights)?;

            if cfg.kind == StrategyKind::FedProx && cfg.prox_mu != 0.0 {
                let mu = cfg.prox_mu;
                for ((g, w), w0) in grads.iter_mut().zip(model.params()).zip(global.params()) {
                    let gd = g.data_mut();
                    for (i, (wv, w0v)) in w.data().iter().zip(w0.data()).enumerate() {
                        gd[i] += mu * (wv - w0v);
                    }
                }
            }
            if let Some(corr) = &correction {
                for (g, c) in grads.iter_mut().zip(corr) {
                    g.add_scaled(c, 1.0)?;
                }
            }

            sgd_step_model(&mut model, &grads, &sgd, &mut state)?;
            loss_weighted += loss * yb.len() as f64;
            samples_seen += yb.len();
            steps += 1;
        }
    }

    let (new_variate, variate_delta) = if is_scaffold {
        let denom = steps as f64 * cfg.sgd.learning_rate;
        let ci_old = client
            .variate
            .clone()
            .unwrap_or_else(|| param_set_zeros_like(global));
        if denom == 0.0 {
            // lr == 0 leaves the model untouched; the variate stays put.
            (Some(ci_old.clone()), Some(param_set_zeros_like(global)))
        } else {
            let mut ci_new = ci_old.clone();
            if let Some(c) = server_variate {
                for (t, s) in ci_new.iter_mut().zip(c) {
                    t.add_scaled(s, -1.0)?;
                }
            }
            for ((t, g), l) in ci_new.iter_mut().zip(global.params()).zip(model.params()) {
                let td = t.data_mut();
                for (i, (gv, lv)) in g.data().iter().zip(l.data()).enumerate() {
                    td[i] += (gv - lv) / denom;
                }
            }
            let mut delta = ci_new.clone();
            for (d, old) in delta.iter_mut().zip(&ci_old) {
                d.add_scaled(old, -1.0)?;
            }
            (Some(ci_new), Some(delta))
        }
    } else {
        (None, None)
    };

    Ok(ClientUpdate {
        id: client.id,
        model,
        sample_count: client.indices.len(),
        train_loss: loss_weighted / samples_seen as f64,
        steps,
        new_variate,
        variate_delta,
    })
}

use serde::{Deserialize, Serialize};

use super::{MlpModel, Tensor2};
use crate::{Error, Result};

/// Minibatch SGD settings with classical momentum and decoupled weight
/// decay:
///
/// ```text
/// v <- momentum * v - lr * (g + weight_decay * w)
/// w <- w + v
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-5,
            batch_size: 128,
        }
    }
}

impl SgdConfig {
    /// Config-level validation used before a run; the step function itself
    /// also tolerates `learning_rate == 0` (a no-op step) so that algebraic
    /// identities can be exercised directly.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-parameter velocity buffers.
#[derive(Clone, Debug)]
pub struct SgdState {
    velocity: Vec<Tensor2>,
}

impl SgdState {
    pub fn zeros_like(params: &[&Tensor2]) -> Self {
        SgdState {
            velocity: params
                .iter()
                .map(|p| Tensor2::zeros(p.rows(), p.cols()))
                .collect(),
        }
    }

    pub fn for_model(model: &MlpModel) -> Self {
        SgdState::zeros_like(&model.params())
    }
}

fn check_aligned(params_len: usize, grads: &[Tensor2], state: &SgdState) -> Result<()> {
    if grads.len() != params_len || state.velocity.len() != params_len {
        return Err(Error::shape(
            "sgd_step",
            format!("{params_len} parameter tensors"),
            format!("{} grads / {} velocities", grads.len(), state.velocity.len()),
        ));
    }
    Ok(())
}

/// One SGD step over an ordered parameter list.
pub fn sgd_step(
    params: &mut [&mut Tensor2],
    grads: &[Tensor2],
    cfg: &SgdConfig,
    state: &mut SgdState,
) -> Result<()> {
    check_aligned(params.len(), grads, state)?;
    let lr = cfg.learning_rate;
    let m = cfg.momentum;
    let wd = cfg.weight_decay;
    for ((w, g), v) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        if w.rows() != g.rows() || w.cols() != g.cols() {
            return Err(Error::shape(
                "sgd_step gradient",
                format!("{}x{}", w.rows(), w.cols()),
                format!("{}x{}", g.rows(), g.cols()),
            ));
        }
        let wdata = w.data_mut();
        let gdata = g.data();
        let vdata = v.data_mut();
        if wd == 0.0 {
            for i in 0..wdata.len() {
                vdata[i] = m * vdata[i] - lr * gdata[i];
                wdata[i] += vdata[i];
            }
        } else {
            for i in 0..wdata.len() {
                vdata[i] = m * vdata[i] - lr * (gdata[i] + wd * wdata[i]);
                wdata[i] += vdata[i];
            }
        }
    }
    Ok(())
}

/// [`sgd_step`] over a model's parameters in `params()` order.
pub fn sgd_step_model(
    model: &mut MlpModel,
    grads: &[Tensor2],
    cfg: &SgdConfig,
    state: &mut SgdState,
) -> Result<()> {
    let mut params = model.params_mut();
    sgd_step(&mut params, grads, cfg, state)
}

/// Zero tensors matching a model's parameter shapes (velocities, control
/// variates, gradient accumulators).
pub fn param_set_zeros_like(model: &MlpModel) -> Vec<Tensor2> {
    model
        .params()
        .iter()
        .map(|p| Tensor2::zeros(p.rows(), p.cols()))
        .collect()
}

/// Elementwise `a + scale * b` over parameter sets.
pub fn add_param_sets(a: &[Tensor2], b: &[Tensor2], scale: f64) -> Result<Vec<Tensor2>> {
    if a.len() != b.len() {
        return Err(Error::shape(
            "add_param_sets",
            format!("{}", a.len()),
            format!("{}", b.len()),
        ));
    }
    let mut out = a.to_vec();
    for (o, bb) in out.iter_mut().zip(b) {
        o.add_scaled(bb, scale)?;
    }
    Ok(out)
}

/// Elementwise `a - b` over parameter sets.
pub fn sub_param_sets(a: &[Tensor2], b: &[Tensor2]) -> Result<Vec<Tensor2>> {
    add_param_sets(a, b, -1.0)
}

/// Elementwise scaling of a parameter set.
pub fn scale_param_set(set: &mut [Tensor2], scale: f64) {
    for t in set.iter_mut() {
        t.scale(scale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor2 {
        Tensor2::from_vec(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn zero_learning_rate_is_a_noop() {
        let mut w = scalar(1.25);
        let g = scalar(17.0);
        let cfg = SgdConfig {
            learning_rate: 0.0,
            momentum: 0.9,
            weight_decay: 1e-5,
            batch_size: 1,
        };
        let mut state = SgdState::zeros_like(&[&w]);
        let before = w.clone();
        sgd_step(&mut [&mut w], &[g], &cfg, &mut state).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn plain_step_matches_hand_computation() {
        let mut w = scalar(1.0);
        let g = scalar(2.0);
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            batch_size: 1,
        };
        let mut state = SgdState::zeros_like(&[&w]);
        sgd_step(&mut [&mut w], &[g], &cfg, &mut state).unwrap();
        assert!((w.get(0, 0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn momentum_recurrence_matches_hand_unroll() {
        // v1 = -lr*g1; w1 = w0 + v1; v2 = m*v1 - lr*g2; w2 = w1 + v2.
        let (lr, m) = (0.1, 0.9);
        let (g1, g2) = (2.0, -1.0);
        let mut w = scalar(1.0);
        let cfg = SgdConfig {
            learning_rate: lr,
            momentum: m,
            weight_decay: 0.0,
            batch_size: 1,
        };
        let mut state = SgdState::zeros_like(&[&w]);
        sgd_step(&mut [&mut w], &[scalar(g1)], &cfg, &mut state).unwrap();
        sgd_step(&mut [&mut w], &[scalar(g2)], &cfg, &mut state).unwrap();
        let v1 = -lr * g1;
        let w1 = 1.0 + v1;
        let v2 = m * v1 - lr * g2;
        let w2 = w1 + v2;
        assert!((w.get(0, 0) - w2).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        let mut w = scalar(10.0);
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.5,
            batch_size: 1,
        };
        let mut state = SgdState::zeros_like(&[&w]);
        sgd_step(&mut [&mut w], &[scalar(0.0)], &cfg, &mut state).unwrap();
        // w = 10 - 0.1 * 0.5 * 10 = 9.5
        assert!((w.get(0, 0) - 9.5).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut w = scalar(1.0);
        let g = Tensor2::zeros(2, 1);
        let cfg = SgdConfig::default();
        let mut state = SgdState::zeros_like(&[&w]);
        assert!(sgd_step(&mut [&mut w], &[g], &cfg, &mut state).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SgdConfig::default().validate().is_ok());
        assert!(SgdConfig {
            learning_rate: 0.0,
            ..SgdConfig::default()
        }
        .validate()
        .is_err());
        assert!(SgdConfig {
            momentum: 1.0,
            ..SgdConfig::default()
        }
        .validate()
        .is_err());
        assert!(SgdConfig {
            weight_decay: -0.1,
            ..SgdConfig::default()
        }
        .validate()
        .is_err());
        assert!(SgdConfig {
            batch_size: 0,
            ..SgdConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn param_set_helpers() {
        let a = vec![scalar(1.0), scalar(2.0)];
        let b = vec![scalar(0.5), scalar(-1.0)];
        let sum = add_param_sets(&a, &b, 2.0).unwrap();
        assert_eq!(sum[0].get(0, 0), 2.0);
        assert_eq!(sum[1].get(0, 0), 0.0);
        let diff = sub_param_sets(&a, &b).unwrap();
        assert_eq!(diff[0].get(0, 0), 0.5);
        assert_eq!(diff[1].get(0, 0), 3.0);
        assert!(add_param_sets(&a, &b[..1], 1.0).is_err());
    }
}

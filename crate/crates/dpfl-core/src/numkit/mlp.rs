use serde::{Deserialize, Serialize};

use super::{Rng, Tensor2};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Activation::Identity => v,
        }
    }

    /// Derivative as a function of the pre-activation; ReLU uses the
    /// subgradient 0 at the kink.
    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer: `out = act(x @ weight + bias)`.
///
/// `weight` is in_dim x out_dim, `bias` is 1 x out_dim.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Tensor2,
    pub bias: Tensor2,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weight: Tensor2, bias: Tensor2, activation: Activation) -> Result<Self> {
        if bias.rows() != 1 || bias.cols() != weight.cols() {
            return Err(Error::shape(
                "Layer::new",
                format!("bias 1x{}", weight.cols()),
                format!("{}x{}", bias.rows(), bias.cols()),
            ));
        }
        Ok(Layer {
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Multilayer perceptron with an explicit feature/head split.
///
/// `split_idx` marks the boundary between the feature extractor
/// (layers `0..split_idx`) and the classifier head (`split_idx..`); the
/// activation entering the head is the model's feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    split_idx: usize,
}

impl MlpModel {
    /// Builds from explicit layers, validating the dimension chain.
    pub fn from_layers(layers: Vec<Layer>, split_idx: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one layer".into()));
        }
        for i in 1..layers.len() {
            if layers[i].in_dim() != layers[i - 1].out_dim() {
                return Err(Error::shape(
                    format!("layer {i} input"),
                    format!("{}", layers[i - 1].out_dim()),
                    format!("{}", layers[i].in_dim()),
                ));
            }
        }
        if split_idx == 0 || split_idx > layers.len() {
            return Err(Error::InvalidArgument(format!(
                "split index {split_idx} outside 1..={}",
                layers.len()
            )));
        }
        Ok(MlpModel { layers, split_idx })
    }

    /// Random He-style initialization: hidden layers are ReLU, the output
    /// layer is linear, biases start at zero. The split sits before the
    /// final layer.
    pub fn init(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "need at least input and output dims".into(),
            ));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument("zero-width layer".into()));
        }
        let n_layers = dims.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let last = l == n_layers - 1;
            let gain = if last { 1.0 } else { 2.0 };
            let sigma = (gain / fan_in as f64).sqrt();
            let weight = Tensor2::from_fn(fan_in, fan_out, |_, _| rng.normal(0.0, sigma));
            let bias = Tensor2::zeros(1, fan_out);
            layers.push(Layer {
                weight,
                bias,
                activation: if last {
                    Activation::Identity
                } else {
                    Activation::Relu
                },
            });
        }
        let split_idx = n_layers.max(2) - 1;
        MlpModel::from_layers(layers, split_idx.max(1))
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn split_idx(&self) -> usize {
        self.split_idx
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[self.split_idx - 1].out_dim()
    }

    /// Parameter views in a fixed order: `[w0, b0, w1, b1, ...]`.
    pub fn params(&self) -> Vec<&Tensor2> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.data().len())
            .sum()
    }
}

/// Cached intermediate state from a forward pass.
///
/// `activations[0]` is the input batch; `activations[k+1]` is the output of
/// layer `k`; `pre[k]` is layer `k`'s pre-activation.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub activations: Vec<Tensor2>,
    pub pre: Vec<Tensor2>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Tensor2 {
        self.activations.last().expect("non-empty trace")
    }

    pub fn features(&self, model: &MlpModel) -> &Tensor2 {
        &self.activations[model.split_idx()]
    }
}

/// Forward pass caching every activation and pre-activation.
pub fn forward_trace(model: &MlpModel, x: &Tensor2) -> Result<ForwardTrace> {
    if x.cols() != model.in_dim() {
        return Err(Error::shape(
            "layer 0 input",
            format!("{}", model.in_dim()),
            format!("{}", x.cols()),
        ));
    }
    let mut activations = Vec::with_capacity(model.num_layers() + 1);
    let mut pre = Vec::with_capacity(model.num_layers());
    activations.push(x.clone());
    for layer in &model.layers {
        let mut z = activations
            .last()
            .expect("non-empty")
            .matmul(&layer.weight)?;
        z.add_row_broadcast(&layer.bias)?;
        let a = z.map(|v| layer.activation.apply(v));
        pre.push(z);
        activations.push(a);
    }
    Ok(ForwardTrace { activations, pre })
}

/// Forward pass returning `(logits, features)`.
pub fn forward(model: &MlpModel, x: &Tensor2) -> Result<(Tensor2, Tensor2)> {
    let trace = forward_trace(model, x)?;
    let features = trace.features(model).clone();
    let logits = trace
        .activations
        .into_iter()
        .last()
        .expect("non-empty trace");
    Ok((logits, features))
}

/// Backpropagates `d_out` (the gradient w.r.t. `activations[upto]`) through
/// layers `0..upto`. Returns per-parameter gradients for those layers in
/// `[dw0, db0, ...]` order plus the gradient w.r.t. the input batch.
pub fn backward_through(
    model: &MlpModel,
    trace: &ForwardTrace,
    upto: usize,
    d_out: &Tensor2,
) -> Result<(Vec<Tensor2>, Tensor2)> {
    backward_impl(model, trace, upto, d_out, true)
        .map(|(grads, dx)| (grads.expect("requested"), dx))
}

/// Gradient w.r.t. the input batch only; parameter gradients are skipped.
/// Used when the traversed model is frozen.
pub fn input_gradient(
    model: &MlpModel,
    trace: &ForwardTrace,
    upto: usize,
    d_out: &Tensor2,
) -> Result<Tensor2> {
    backward_impl(model, trace, upto, d_out, false).map(|(_, dx)| dx)
}

/// Full backward pass from a gradient w.r.t. the logits.
pub fn backward_from_logits(
    model: &MlpModel,
    trace: &ForwardTrace,
    dlogits: &Tensor2,
) -> Result<Vec<Tensor2>> {
    backward_through(model, trace, model.num_layers(), dlogits).map(|(grads, _)| grads)
}

fn backward_impl(
    model: &MlpModel,
    trace: &ForwardTrace,
    upto: usize,
    d_out: &Tensor2,
    want_param_grads: bool,
) -> Result<(Option<Vec<Tensor2>>, Tensor2)> {
    if upto == 0 || upto > model.num_layers() {
        return Err(Error::InvalidArgument(format!(
            "backward depth {upto} outside 1..={}",
            model.num_layers()
        )));
    }
    if trace.activations.len() != model.num_layers() + 1 {
        return Err(Error::shape(
            "backward trace",
            format!("{} activations", model.num_layers() + 1),
            format!("{}", trace.activations.len()),
        ));
    }
    let expect = &trace.activations[upto];
    if d_out.rows() != expect.rows() || d_out.cols() != expect.cols() {
        return Err(Error::shape(
            "backward d_out",
            format!("{}x{}", expect.rows(), expect.cols()),
            format!("{}x{}", d_out.rows(), d_out.cols()),
        ));
    }

    let mut grads: Vec<Tensor2> = if want_param_grads {
        Vec::with_capacity(2 * upto)
    } else {
        Vec::new()
    };
    let mut d_act = d_out.clone();
    for k in (0..upto).rev() {
        let layer = &model.layers[k];
        let d_pre = d_act.zip_map(&trace.pre[k], |g, z| g * layer.activation.derivative(z))?;
        if want_param_grads {
            let dw = trace.activations[k].matmul_at_b(&d_pre)?;
            let db = d_pre.col_sum();
            grads.push(db);
            grads.push(dw);
        }
        d_act = d_pre.matmul_a_bt(&layer.weight)?;
    }
    if want_param_grads {
        grads.reverse();
        Ok((Some(grads), d_act))
    } else {
        Ok((None, d_act))
    }
}

/// Top-1 accuracy in percent. Argmax ties resolve to the lowest class
/// index; NaN logits compare below everything.
pub fn accuracy(model: &MlpModel, x: &Tensor2, labels: &[usize]) -> Result<f64> {
    if labels.len() != x.rows() {
        return Err(Error::shape(
            "accuracy labels",
            format!("{}", x.rows()),
            format!("{}", labels.len()),
        ));
    }
    if labels.is_empty() {
        return Err(Error::Degenerate("empty evaluation set".into()));
    }
    let trace = forward_trace(model, x)?;
    let logits = trace.logits();
    let mut correct = 0usize;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for (c, &v) in row.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best = c;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / labels.len() as f64)
}

//! Numeric kernel: dense f64 tensors, splittable deterministic RNG, a
//! small MLP with manual backprop, losses, SGD, and a checkpoint codec.

mod checkpoint;
mod losses;
mod mlp;
mod rng;
mod sgd;
mod tensor;

pub use checkpoint::{load_model, model_from_bytes, model_to_bytes, save_model};
pub use losses::{
    backward_ce, cosine_sim, kl_dlogits_student, log_softmax, softmax, softmax_kl,
    weighted_ce_dlogits,
};
pub use mlp::{
    accuracy, backward_from_logits, backward_through, forward, forward_trace, input_gradient,
    Activation, ForwardTrace, Layer, MlpModel,
};
pub use rng::Rng;
pub use sgd::{add_param_sets, param_set_zeros_like, scale_param_set, sgd_step, sgd_step_model, sub_param_sets, SgdConfig, SgdState};
pub use tensor::Tensor2;

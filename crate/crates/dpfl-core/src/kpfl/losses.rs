use crate::numkit::{
    backward_from_logits, forward, forward_trace, input_gradient, kl_dlogits_student,
    sgd_step_model, weighted_ce_dlogits, MlpModel, Rng, SgdConfig, SgdState, Tensor2,
};
use crate::{Error, Result};

use super::generator::{sample_generator, Generator};
use super::pool::KnowledgePool;
use super::KpflConfig;

/// Feature rows with a norm below this contribute no contrastive gradient;
/// the cosine direction is undefined there.
const NORM_FLOOR: f64 = 1e-12;

/// Generator objective breakdown. The parts are raw; `total` applies the
/// configured gamma weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenLossParts {
    pub total: f64,
    pub ce: f64,
    pub contrastive: f64,
    pub diversity: f64,
}

/// Per-entry, per-sample distillation weights: entry rows in ascending
/// client id, normalized over entries for each sample's label.
fn pool_sample_weights(
    pool: &KnowledgePool,
    t: usize,
    labels: &[usize],
    cfg: &KpflConfig,
) -> Result<Vec<Vec<f64>>> {
    let n_entries = pool.len();
    let mut by_class: Vec<Option<Vec<f64>>> = vec![None; pool.class_totals().len()];
    let mut out = vec![vec![0.0; labels.len()]; n_entries];
    for (b, &y) in labels.iter().enumerate() {
        if y >= by_class.len() {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {} classes",
                by_class.len()
            )));
        }
        if by_class[y].is_none() {
            let column = pool.class_weights(t, y, cfg)?;
            by_class[y] = Some(column.into_iter().map(|(_, w)| w).collect());
        }
        let column = by_class[y].as_ref().expect("just filled");
        for (row, &w) in out.iter_mut().zip(column) {
            row[b] = w;
        }
    }
    Ok(out)
}

/// Teacher cross-entropy through every pool model, each sample weighted by
/// that entry's normalized class weight. Returns the summed loss and the
/// gradient w.r.t. the synthetic batch.
fn teacher_ce_part(
    pool: &KnowledgePool,
    t: usize,
    xhat: &Tensor2,
    labels: &[usize],
    cfg: &KpflConfig,
) -> Result<(f64, Tensor2)> {
    let weights = pool_sample_weights(pool, t, labels, cfg)?;
    let mut loss = 0.0;
    let mut d_xhat = Tensor2::zeros(xhat.rows(), xhat.cols());
    for ((_, entry), w) in pool.entries().zip(&weights) {
        let trace = forward_trace(&entry.model, xhat)?;
        let (part, dlogits) = weighted_ce_dlogits(trace.logits(), labels, w)?;
        loss += part;
        let dx = input_gradient(&entry.model, &trace, entry.model.num_layers(), &dlogits)?;
        d_xhat.add_scaled(&dx, 1.0)?;
    }
    Ok((loss, d_xhat))
}

/// Contrastive alignment of synthetic features to class anchors: the
/// normalized columns of the global model's head weight. Cross-entropy over
/// temperature-scaled cosine scores.
fn contrastive_part(
    global: &MlpModel,
    xhat: &Tensor2,
    labels: &[usize],
    tau: f64,
) -> Result<(f64, Tensor2)> {
    let split = global.split_idx();
    if global.num_layers() - split != 1 {
        return Err(Error::Config(
            "contrastive anchors need a single-layer classifier head".into(),
        ));
    }
    let head = &global.layers()[split].weight;
    let (f_dim, num_classes) = (head.rows(), head.cols());
    let mut anchors = head.clone();
    for k in 0..num_classes {
        let norm = (0..f_dim)
            .map(|r| head.get(r, k) * head.get(r, k))
            .sum::<f64>()
            .sqrt();
        if norm < NORM_FLOOR {
            return Err(Error::Degenerate(format!(
                "head column {k} is zero; class anchor undefined"
            )));
        }
        for r in 0..f_dim {
            anchors.set(r, k, head.get(r, k) / norm);
        }
    }

    let trace = forward_trace(global, xhat)?;
    let features = trace.features(global);
    let batch = features.rows();
    let mut norms = vec![0.0; batch];
    let mut fhat = features.clone();
    for b in 0..batch {
        let norm = features.row(b).iter().map(|v| v * v).sum::<f64>().sqrt();
        norms[b] = norm;
        let row = fhat.row_mut(b);
        if norm >= NORM_FLOOR {
            for v in row.iter_mut() {
                *v /= norm;
            }
        } else {
            for v in row.iter_mut() {
                *v = 0.0;
            }
        }
    }
    let cosines = fhat.matmul(&anchors)?;
    let mut scores = cosines.clone();
    scores.scale(1.0 / tau);
    let unit = vec![1.0; batch];
    let (loss, dscores) = weighted_ce_dlogits(&scores, labels, &unit)?;

    // d score / d feature: (anchor - cos * fhat) / (tau * ||f||).
    let term = dscores.matmul_a_bt(&anchors)?;
    let mut d_features = Tensor2::zeros(batch, f_dim);
    for b in 0..batch {
        if norms[b] < NORM_FLOOR {
            continue;
        }
        let alpha: f64 = dscores
            .row(b)
            .iter()
            .zip(cosines.row(b))
            .map(|(d, c)| d * c)
            .sum();
        let scale = 1.0 / (tau * norms[b]);
        let row = d_features.row_mut(b);
        for (j, v) in row.iter_mut().enumerate() {
            *v = (term.get(b, j) - alpha * fhat.get(b, j)) * scale;
        }
    }
    let dx = input_gradient(global, &trace, split, &d_features)?;
    Ok((loss, dx))
}

/// Diversity pressure: `exp(-mean_{a<b} ||xhat_a - xhat_b|| / (||z_a - z_b||
/// + 1e-8))`. Spread-out batches drive the loss toward zero; a collapsed
/// batch scores exactly one. Coincident output pairs contribute no gradient.
fn diversity_part(z: &Tensor2, xhat: &Tensor2) -> Result<(f64, Tensor2)> {
    let batch = xhat.rows();
    if batch < 2 {
        return Err(Error::Degenerate(
            "diversity needs a batch of at least 2".into(),
        ));
    }
    if z.rows() != batch {
        return Err(Error::shape(
            "diversity latent batch",
            format!("{batch}"),
            format!("{}", z.rows()),
        ));
    }
    let dist = |t: &Tensor2, a: usize, b: usize| -> f64 {
        t.row(a)
            .iter()
            .zip(t.row(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut pairs = Vec::with_capacity(batch * (batch - 1) / 2);
    let mut mean_ratio = 0.0;
    for a in 0..batch {
        for b in (a + 1)..batch {
            let dz = dist(z, a, b) + 1e-8;
            let dx = dist(xhat, a, b);
            mean_ratio += dx / dz;
            pairs.push((a, b, dz, dx));
        }
    }
    let count = pairs.len() as f64;
    mean_ratio /= count;
    let loss = (-mean_ratio).exp();

    let mut d_xhat = Tensor2::zeros(batch, xhat.cols());
    for &(a, b, dz, dx) in &pairs {
        if dx == 0.0 {
            continue;
        }
        let coef = -loss / (count * dx * dz);
        for j in 0..xhat.cols() {
            let diff = coef * (xhat.get(a, j) - xhat.get(b, j));
            *d_xhat.row_mut(a).get_mut(j).expect("in range") += diff;
            *d_xhat.row_mut(b).get_mut(j).expect("in range") -= diff;
        }
    }
    Ok((loss, d_xhat))
}

/// Full generator objective at round `t` and its gradients in
/// `Generator::params()` order. Parts whose gamma is zero are skipped and
/// reported as zero.
pub fn generator_loss(
    gen: &Generator,
    z: &Tensor2,
    labels: &[usize],
    pool: &KnowledgePool,
    global: &MlpModel,
    t: usize,
    cfg: &KpflConfig,
) -> Result<(GenLossParts, Vec<Tensor2>)> {
    let trace = gen.generate_trace(z, labels)?;
    let xhat = trace.logits();
    let mut d_xhat = Tensor2::zeros(xhat.rows(), xhat.cols());

    let mut ce = 0.0;
    if cfg.gamma_ce > 0.0 {
        let (loss, dx) = teacher_ce_part(pool, t, xhat, labels, cfg)?;
        ce = loss;
        d_xhat.add_scaled(&dx, cfg.gamma_ce)?;
    }
    let mut contrastive = 0.0;
    if cfg.gamma_ctr > 0.0 {
        let (loss, dx) = contrastive_part(global, xhat, labels, cfg.tau_temp)?;
        contrastive = loss;
        d_xhat.add_scaled(&dx, cfg.gamma_ctr)?;
    }
    let mut diversity = 0.0;
    if cfg.gamma_div > 0.0 {
        let (loss, dx) = diversity_part(z, xhat)?;
        diversity = loss;
        d_xhat.add_scaled(&dx, cfg.gamma_div)?;
    }
    let total = cfg.gamma_ce * ce + cfg.gamma_ctr * contrastive + cfg.gamma_div * diversity;
    let grads = gen.backward(labels, &trace, &d_xhat)?;
    Ok((
        GenLossParts {
            total,
            ce,
            contrastive,
            diversity,
        },
        grads,
    ))
}

/// Ensemble teacher logits: pool logits mixed per sample with the same
/// normalized class weights used by the teacher cross-entropy.
pub fn ensemble_logits(
    pool: &KnowledgePool,
    t: usize,
    xhat: &Tensor2,
    labels: &[usize],
    cfg: &KpflConfig,
) -> Result<Tensor2> {
    let weights = pool_sample_weights(pool, t, labels, cfg)?;
    let out_dim = pool
        .entries()
        .next()
        .ok_or(Error::EmptyRound)?
        .1
        .model
        .out_dim();
    let mut ensemble = Tensor2::zeros(xhat.rows(), out_dim);
    for ((_, entry), w) in pool.entries().zip(&weights) {
        let (logits, _) = forward(&entry.model, xhat)?;
        for b in 0..xhat.rows() {
            for (dst, &src) in ensemble.row_mut(b).iter_mut().zip(logits.row(b)) {
                *dst += w[b] * src;
            }
        }
    }
    Ok(ensemble)
}

/// Distills the pool ensemble into a copy of the global model over
/// synthetic batches. Returns the refined model and the mean distillation
/// loss; zero steps return the global model unchanged.
pub fn distill(
    global: &MlpModel,
    gen: &Generator,
    pool: &KnowledgePool,
    t: usize,
    cfg: &KpflConfig,
    rng: &mut Rng,
) -> Result<(MlpModel, f64)> {
    if cfg.distill_steps == 0 {
        return Ok((global.clone(), 0.0));
    }
    let mut student = global.clone();
    let mut state = SgdState::for_model(&student);
    let sgd = SgdConfig {
        learning_rate: cfg.distill_lr,
        momentum: 0.9,
        weight_decay: 0.0,
        batch_size: cfg.gen_batch,
    };
    let inv_temp = 1.0 / cfg.distill_temperature;
    let mut total_loss = 0.0;
    for _ in 0..cfg.distill_steps {
        let (xhat, labels) = sample_generator(gen, cfg.gen_batch, pool.class_totals(), rng)?;
        let mut teacher = ensemble_logits(pool, t, &xhat, &labels, cfg)?;
        teacher.scale(inv_temp);
        let trace = forward_trace(&student, &xhat)?;
        let mut scaled = trace.logits().clone();
        scaled.scale(inv_temp);
        let (loss, mut dlogits) = kl_dlogits_student(&teacher, &scaled)?;
        dlogits.scale(inv_temp);
        let grads = backward_from_logits(&student, &trace, &dlogits)?;
        sgd_step_model(&mut student, &grads, &sgd, &mut state)?;
        total_loss += loss;
    }
    Ok((student, total_loss / cfg.distill_steps as f64))
}

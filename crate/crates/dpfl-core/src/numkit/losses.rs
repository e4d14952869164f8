use super::{backward_from_logits, forward_trace, MlpModel, Tensor2};
use crate::{Error, Result};

/// Row-wise softmax with max subtraction for overflow safety.
pub fn softmax(logits: &Tensor2) -> Tensor2 {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Row-wise log-softmax via the log-sum-exp identity.
pub fn log_softmax(logits: &Tensor2) -> Tensor2 {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

fn validate_labels_weights(
    rows: usize,
    classes: usize,
    labels: &[usize],
    weights: &[f64],
) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::shape(
            "cross-entropy labels",
            format!("{rows}"),
            format!("{}", labels.len()),
        ));
    }
    if weights.len() != rows {
        return Err(Error::shape(
            "cross-entropy weights",
            format!("{rows}"),
            format!("{}", weights.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument(
            "sample weights must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

/// Mean weighted cross-entropy over the batch and its gradient w.r.t. the
/// logits: `loss = (1/B) sum_b w_b * (lse(z_b) - z_{b,y_b})`.
pub fn weighted_ce_dlogits(
    logits: &Tensor2,
    labels: &[usize],
    weights: &[f64],
) -> Result<(f64, Tensor2)> {
    validate_labels_weights(logits.rows(), logits.cols(), labels, weights)?;
    if logits.rows() == 0 {
        return Err(Error::Degenerate("empty batch".into()));
    }
    let b = logits.rows() as f64;
    let probs = softmax(logits);
    let logp = log_softmax(logits);
    let mut dlogits = probs;
    let mut loss = 0.0;
    for r in 0..logits.rows() {
        let w = weights[r];
        loss -= w * logp.get(r, labels[r]);
        let row = dlogits.row_mut(r);
        row[labels[r]] -= 1.0;
        for v in row.iter_mut() {
            *v *= w / b;
        }
    }
    Ok((loss / b, dlogits))
}

/// Forward + backward for mean weighted cross-entropy; returns the loss and
/// per-parameter gradients. Does not mutate the model.
pub fn backward_ce(
    model: &MlpModel,
    x: &Tensor2,
    labels: &[usize],
    weights: &[f64],
) -> Result<(f64, Vec<Tensor2>)> {
    let trace = forward_trace(model, x)?;
    let (loss, dlogits) = weighted_ce_dlogits(trace.logits(), labels, weights)?;
    let grads = backward_from_logits(model, &trace, &dlogits)?;
    Ok((loss, grads))
}

fn check_same_logit_shape(p: &Tensor2, q: &Tensor2, context: &str) -> Result<()> {
    if p.rows() != q.rows() || p.cols() != q.cols() {
        return Err(Error::shape(
            context,
            format!("{}x{}", p.rows(), p.cols()),
            format!("{}x{}", q.rows(), q.cols()),
        ));
    }
    if p.rows() == 0 || p.cols() == 0 {
        return Err(Error::Degenerate("empty logits".into()));
    }
    Ok(())
}

/// Mean over rows of `KL(softmax(p) || softmax(q))`; each row's divergence
/// is clamped at zero so rounding never reports a negative value.
pub fn softmax_kl(p_logits: &Tensor2, q_logits: &Tensor2) -> Result<f64> {
    check_same_logit_shape(p_logits, q_logits, "softmax_kl")?;
    let p = softmax(p_logits);
    let logp = log_softmax(p_logits);
    let logq = log_softmax(q_logits);
    let mut total = 0.0;
    for r in 0..p.rows() {
        let mut row = 0.0;
        for c in 0..p.cols() {
            row += p.get(r, c) * (logp.get(r, c) - logq.get(r, c));
        }
        total += row.max(0.0);
    }
    Ok(total / p.rows() as f64)
}

/// Mean KL(softmax(teacher) || softmax(student)) and its gradient w.r.t.
/// the student logits: `(softmax(student) - softmax(teacher)) / B`.
pub fn kl_dlogits_student(
    teacher_logits: &Tensor2,
    student_logits: &Tensor2,
) -> Result<(f64, Tensor2)> {
    let loss = softmax_kl(teacher_logits, student_logits)?;
    let b = teacher_logits.rows() as f64;
    let dlogits = softmax(student_logits)
        .zip_map(&softmax(teacher_logits), |s, t| (s - t) / b)?;
    Ok((loss, dlogits))
}

/// Cosine similarity of two equal-length vectors; zero vectors are an error.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(
            "cosine_sim",
            format!("{}", a.len()),
            format!("{}", b.len()),
        ));
    }
    if a.is_empty() {
        return Err(Error::Degenerate("empty vectors".into()));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("zero vector in cosine similarity".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{Activation, Layer};

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = Tensor2::from_vec(2, 3, vec![1.0, 2.0, 3.0, -100.0, 0.0, 100.0]).unwrap();
        let p = softmax(&logits);
        for r in 0..2 {
            let s: f64 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_overflow_safe() {
        let logits = Tensor2::from_vec(1, 2, vec![1e4, 1e4 - 5.0]).unwrap();
        let p = softmax(&logits);
        assert!(p.is_finite());
        assert!((p.get(0, 0) - 1.0 / (1.0 + (-5.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn kl_of_identical_logits_is_zero() {
        let logits = Tensor2::from_vec(2, 4, vec![0.3, -1.0, 2.0, 0.0, 5.0, 5.0, 5.0, 5.0]).unwrap();
        assert_eq!(softmax_kl(&logits, &logits).unwrap(), 0.0);
    }

    #[test]
    fn kl_matches_closed_form() {
        // p = (1/2, 1/2), q = (1/4, 3/4):
        // KL = 0.5 ln 2 + 0.5 ln(2/3).
        let p = Tensor2::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let q = Tensor2::from_vec(1, 2, vec![0.0, 3.0f64.ln()]).unwrap();
        let expect = 0.5 * 2.0f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((softmax_kl(&p, &q).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn kl_is_shift_invariant() {
        let p = Tensor2::from_vec(1, 3, vec![0.1, -0.5, 2.0]).unwrap();
        let q = Tensor2::from_vec(1, 3, vec![1.0, 1.5, -2.0]).unwrap();
        let p_shift = p.map(|v| v + 123.0);
        let q_shift = q.map(|v| v - 0.5);
        let a = softmax_kl(&p, &q).unwrap();
        let b = softmax_kl(&p_shift, &q_shift).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn kl_gradient_vanishes_when_distributions_match() {
        let t = Tensor2::from_vec(1, 3, vec![0.5, -1.0, 0.0]).unwrap();
        let (loss, d) = kl_dlogits_student(&t, &t).unwrap();
        assert_eq!(loss, 0.0);
        assert!(d.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ce_zero_weights_give_zero_everything() {
        let logits = Tensor2::from_vec(2, 3, vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0]).unwrap();
        let (loss, d) = weighted_ce_dlogits(&logits, &[0, 2], &[0.0, 0.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(d.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ce_matches_hand_computation() {
        // Uniform logits over 2 classes: loss = ln 2, dlogits = (p - y)/B.
        let logits = Tensor2::zeros(1, 2);
        let (loss, d) = weighted_ce_dlogits(&logits, &[1], &[1.0]).unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-12);
        assert!((d.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((d.get(0, 1) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn ce_rejects_bad_inputs() {
        let logits = Tensor2::zeros(2, 3);
        assert!(weighted_ce_dlogits(&logits, &[0, 3], &[1.0, 1.0]).is_err());
        assert!(weighted_ce_dlogits(&logits, &[0], &[1.0, 1.0]).is_err());
        assert!(weighted_ce_dlogits(&logits, &[0, 1], &[1.0, -1.0]).is_err());
    }

    #[test]
    fn saturated_correct_prediction_has_negligible_gradient() {
        let w = Tensor2::zeros(2, 2);
        let b = Tensor2::from_vec(1, 2, vec![100.0, 0.0]).unwrap();
        let model = MlpModel::from_layers(
            vec![Layer::new(w, b, Activation::Identity).unwrap()],
            1,
        )
        .unwrap();
        let x = Tensor2::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        let (_, grads) = backward_ce(&model, &x, &[0], &[1.0]).unwrap();
        let norm: f64 = grads
            .iter()
            .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        assert!(norm < 1e-6, "norm {norm}");
    }

    #[test]
    fn backward_ce_zero_weights_model() {
        // Zero model on symmetric labels: dlogits rows are (p - y)/B and the
        // input is nonzero, so dW is nonzero, but db sums to zero across a
        // label-balanced batch.
        let w = Tensor2::zeros(1, 2);
        let b = Tensor2::zeros(1, 2);
        let model = MlpModel::from_layers(
            vec![Layer::new(w, b, Activation::Identity).unwrap()],
            1,
        )
        .unwrap();
        let x = Tensor2::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let (loss, grads) = backward_ce(&model, &x, &[0, 1], &[1.0, 1.0]).unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-12);
        assert!(grads[1].data().iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine_sim(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(cosine_sim(&[1.0, 0.0], &[0.0, 5.0]).unwrap().abs() < 1e-12);
        let v = cosine_sim(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_sim(&[1.0], &[1.0, 2.0]).is_err());
    }
}

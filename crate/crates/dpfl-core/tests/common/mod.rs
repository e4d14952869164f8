//! Shared checks used by both the focused test targets and the acceptance
//! gate, so the gate exercises exactly the code the targets pin down.

#![allow(dead_code)]

use dpfl_core::datagen::{generate, partition_equal, DatasetSpec};
use dpfl_core::flcore::{RoundDriver, RoundPlugin, Server, StrategyConfig, StrategyKind};
use dpfl_core::kpfl::{
    generator_loss, Generator, GeneratorSpec, KnowledgePool, KpflConfig, KpflPlugin, PoolUpdate,
};
use dpfl_core::metrics::{instability, intransigence, windowed_eval, WindowStat};
use dpfl_core::numkit::{
    backward_ce, kl_dlogits_student, model_to_bytes, softmax_kl, weighted_ce_dlogits, MlpModel,
    Rng, Tensor2,
};
use dpfl_core::participation::ParticipationModel;
use dpfl_core::Result;

/// Worst finite-difference discrepancy, expressed as a fraction of the
/// allowed tolerance: a report passes iff `worst <= 1`.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradcheckReport {
    pub checks: usize,
    pub worst: f64,
}

impl GradcheckReport {
    fn record(&mut self, analytic: f64, numeric: f64) {
        let tol = 1e-6_f64.max(1e-4 * analytic.abs().max(numeric.abs()));
        let ratio = (analytic - numeric).abs() / tol;
        self.checks += 1;
        if ratio > self.worst {
            self.worst = ratio;
        }
    }

    pub fn passed(&self) -> bool {
        self.worst <= 1.0
    }
}

const FD_H: f64 = 1e-5;

fn random_tensor(rows: usize, cols: usize, sigma: f64, rng: &mut Rng) -> Tensor2 {
    let mut t = Tensor2::zeros(rows, cols);
    for v in t.data_mut() {
        *v = rng.normal(0.0, sigma);
    }
    t
}

fn random_labels(n: usize, classes: usize, rng: &mut Rng) -> Vec<usize> {
    (0..n).map(|_| rng.index(classes)).collect()
}

/// Central difference of a scalar function of one tensor coordinate.
fn central_diff(t: &mut Tensor2, i: usize, mut f: impl FnMut(&Tensor2) -> f64) -> f64 {
    let orig = t.data()[i];
    t.data_mut()[i] = orig + FD_H;
    let hi = f(t);
    t.data_mut()[i] = orig - FD_H;
    let lo = f(t);
    t.data_mut()[i] = orig;
    (hi - lo) / (2.0 * FD_H)
}

fn check_weighted_ce(report: &mut GradcheckReport, rng: &mut Rng) {
    let mut logits = random_tensor(6, 5, 2.0, rng);
    let labels = random_labels(6, 5, rng);
    let weights: Vec<f64> = (0..6).map(|_| 0.2 + 1.6 * rng.f64()).collect();
    let (_, dlogits) = weighted_ce_dlogits(&logits, &labels, &weights).unwrap();
    for i in 0..logits.data().len() {
        let numeric = central_diff(&mut logits, i, |l| {
            weighted_ce_dlogits(l, &labels, &weights).unwrap().0
        });
        report.record(dlogits.data()[i], numeric);
    }
}

fn check_model_backward(report: &mut GradcheckReport, rng: &mut Rng) {
    let model = MlpModel::init(&[5, 7, 4], rng).unwrap();
    let x = random_tensor(6, 5, 1.0, rng);
    let labels = random_labels(6, 4, rng);
    let weights = vec![1.0; 6];
    let (_, grads) = backward_ce(&model, &x, &labels, &weights).unwrap();
    for p in 0..grads.len() {
        for i in 0..grads[p].data().len() {
            let mut perturbed = model.clone();
            let orig = perturbed.params()[p].data()[i];
            perturbed.params_mut()[p].data_mut()[i] = orig + FD_H;
            let hi = backward_ce(&perturbed, &x, &labels, &weights).unwrap().0;
            perturbed.params_mut()[p].data_mut()[i] = orig - FD_H;
            let lo = backward_ce(&perturbed, &x, &labels, &weights).unwrap().0;
            report.record(grads[p].data()[i], (hi - lo) / (2.0 * FD_H));
        }
    }
}

fn check_prox_objective(report: &mut GradcheckReport, rng: &mut Rng) {
    let mu = 0.37;
    let model = MlpModel::init(&[4, 6, 3], rng).unwrap();
    let anchor = MlpModel::init(&[4, 6, 3], &mut rng.split("anchor")).unwrap();
    let x = random_tensor(5, 4, 1.0, rng);
    let labels = random_labels(5, 3, rng);
    let weights = vec![1.0; 5];
    let objective = |m: &MlpModel| -> f64 {
        let ce = backward_ce(m, &x, &labels, &weights).unwrap().0;
        let mut prox = 0.0;
        for (w, w0) in m.params().iter().zip(anchor.params()) {
            for (a, b) in w.data().iter().zip(w0.data()) {
                prox += (a - b) * (a - b);
            }
        }
        ce + 0.5 * mu * prox
    };
    let (_, grads) = backward_ce(&model, &x, &labels, &weights).unwrap();
    for p in 0..grads.len() {
        for i in 0..grads[p].data().len() {
            let analytic = grads[p].data()[i]
                + mu * (model.params()[p].data()[i] - anchor.params()[p].data()[i]);
            let mut perturbed = model.clone();
            let orig = perturbed.params()[p].data()[i];
            perturbed.params_mut()[p].data_mut()[i] = orig + FD_H;
            let hi = objective(&perturbed);
            perturbed.params_mut()[p].data_mut()[i] = orig - FD_H;
            let lo = objective(&perturbed);
            report.record(analytic, (hi - lo) / (2.0 * FD_H));
        }
    }
}

fn check_kl_student(report: &mut GradcheckReport, rng: &mut Rng) {
    let teacher = random_tensor(5, 6, 2.0, rng);
    let mut student = random_tensor(5, 6, 2.0, rng);
    let (_, dstudent) = kl_dlogits_student(&teacher, &student).unwrap();
    for i in 0..student.data().len() {
        let numeric = central_diff(&mut student, i, |s| softmax_kl(&teacher, s).unwrap());
        report.record(dstudent.data()[i], numeric);
    }
    // Tempered chain used by distillation: L(s) = KL(sm(t/T) || sm(s/T)).
    let temp = 2.5;
    let scaled_teacher = teacher.map(|v| v / temp);
    let (_, d_tempered) =
        kl_dlogits_student(&scaled_teacher, &student.map(|v| v / temp)).unwrap();
    for i in 0..student.data().len() {
        let analytic = d_tempered.data()[i] / temp;
        let numeric = central_diff(&mut student, i, |s| {
            softmax_kl(&scaled_teacher, &s.map(|v| v / temp)).unwrap()
        });
        report.record(analytic, numeric);
    }
}

fn check_generator_composite(report: &mut GradcheckReport, rng: &mut Rng) {
    let classes = 4;
    let input_dim = 5;
    let spec = GeneratorSpec {
        latent_dim: 3,
        label_embedding_dim: 2,
        hidden: vec![6],
    };
    let base = KpflConfig {
        lambda_aa: -0.1,
        lambda_ia: -0.2,
        gamma_ce: 1.0,
        gamma_ctr: 0.7,
        gamma_div: 0.4,
        tau_temp: 0.5,
        generator: spec.clone(),
        ..KpflConfig::default()
    };
    let global = MlpModel::init(&[input_dim, 6, classes], rng).unwrap();
    let mut pool = KnowledgePool::new(vec![12, 13, 4, 4]);
    let make_update = |id: usize, counts: Vec<usize>, rng: &mut Rng| PoolUpdate {
        id,
        model: MlpModel::init(&[input_dim, 6, classes], rng).unwrap(),
        variate: None,
        counts,
    };
    pool.update(
        1,
        &[0, 1],
        vec![
            make_update(0, vec![10, 5, 0, 3], rng),
            make_update(1, vec![2, 8, 4, 1], rng),
        ],
    )
    .unwrap();
    // Leave client 1 idle so both age-weight branches are in the graph.
    pool.update(2, &[0], vec![make_update(0, vec![10, 5, 0, 3], rng)])
        .unwrap();

    let mut gen = Generator::init(&spec, classes, input_dim, rng).unwrap();
    let z = random_tensor(8, 3, 1.0, rng);
    let labels = random_labels(8, classes, rng);
    let t = 3;
    // The composite plus each stage in isolation, so a cancellation
    // between stages cannot mask a broken gradient.
    let gammas = [(1.0, 0.7, 0.4), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)];
    for (gamma_ce, gamma_ctr, gamma_div) in gammas {
        let cfg = KpflConfig {
            gamma_ce,
            gamma_ctr,
            gamma_div,
            ..base.clone()
        };
        let (_, grads) = generator_loss(&gen, &z, &labels, &pool, &global, t, &cfg).unwrap();
        for p in 0..grads.len() {
            for i in 0..grads[p].data().len() {
                let orig = gen.params()[p].data()[i];
                gen.params_mut()[p].data_mut()[i] = orig + FD_H;
                let hi = generator_loss(&gen, &z, &labels, &pool, &global, t, &cfg)
                    .unwrap()
                    .0
                    .total;
                gen.params_mut()[p].data_mut()[i] = orig - FD_H;
                let lo = generator_loss(&gen, &z, &labels, &pool, &global, t, &cfg)
                    .unwrap()
                    .0
                    .total;
                gen.params_mut()[p].data_mut()[i] = orig;
                report.record(grads[p].data()[i], (hi - lo) / (2.0 * FD_H));
            }
        }
    }
}

/// Finite-difference verification of every analytic gradient: weighted
/// cross-entropy, full model backward, the proximal objective, plain and
/// tempered distillation, and the composite generator loss through the
/// pool. Tolerance per coordinate: `|a - n| <= max(1e-6, 1e-4 max(|a|,|n|))`.
pub fn gradcheck_suite() -> GradcheckReport {
    let mut report = GradcheckReport::default();
    let rng = Rng::from_seed(0x9bad_5eed);
    check_weighted_ce(&mut report, &mut rng.split("wce"));
    check_model_backward(&mut report, &mut rng.split("mlp"));
    check_prox_objective(&mut report, &mut rng.split("prox"));
    check_kl_student(&mut report, &mut rng.split("kl"));
    check_generator_composite(&mut report, &mut rng.split("gen"));
    report
}

/// Textbook reimplementations of the three metrics, kept deliberately
/// separate from the library code paths.
pub fn oracle_window(values: &[f64], omega: usize, stat: WindowStat, t: usize) -> f64 {
    let window: Vec<f64> = values[t + 1 - omega..=t].to_vec();
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    match stat {
        WindowStat::Mean => mean,
        WindowStat::Variance => {
            window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / window.len() as f64
        }
    }
}

pub fn oracle_intransigence(dynamic: &[f64], static_ref: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..dynamic.len() {
        sum += static_ref[i] - dynamic[i];
    }
    sum / dynamic.len() as f64
}

pub fn oracle_instability(values: &[f64], from: usize, to: usize) -> f64 {
    let w = &values[from..to];
    let n = w.len() as f64;
    let xbar = (w.len() - 1) as f64 / 2.0;
    let ybar = w.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (i, &y) in w.iter().enumerate() {
        sxx += (i as f64 - xbar) * (i as f64 - xbar);
        sxy += (i as f64 - xbar) * (y - ybar);
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    w.iter()
        .enumerate()
        .map(|(i, &y)| (y - slope * i as f64 - intercept).abs())
        .sum::<f64>()
        / n
}

/// Compares all three metrics against the oracles over `count` random
/// series; returns the worst absolute disagreement.
pub fn metric_oracle_sweep(count: usize) -> Result<f64> {
    let mut rng = Rng::from_seed(0x0c0_ffee);
    let mut worst = 0.0_f64;
    let mut track = |a: f64, b: f64| {
        let d = (a - b).abs();
        if d > worst {
            worst = d;
        }
    };
    for _ in 0..count {
        let len = 2 + rng.index(120);
        let scale = 10.0_f64.powi(rng.index(5) as i32 - 2);
        let values: Vec<f64> = (0..len).map(|_| (rng.f64() - 0.3) * scale).collect();
        let twin: Vec<f64> = (0..len).map(|_| (rng.f64() - 0.5) * scale).collect();

        let omega = 1 + rng.index(len);
        let t = omega - 1 + rng.index(len - omega + 1);
        for stat in [WindowStat::Mean, WindowStat::Variance] {
            track(
                windowed_eval(&values, omega, stat, t)?,
                oracle_window(&values, omega, stat, t),
            );
        }

        track(
            intransigence(&values, &twin)?,
            oracle_intransigence(&values, &twin),
        );

        let from = rng.index(len - 1);
        let to = from + 2 + rng.index(len - from - 1);
        track(
            instability(&values, from, to)?,
            oracle_instability(&values, from, to),
        );
    }
    Ok(worst)
}

/// Per-round accuracies (as bits) and the final model bytes of a run.
pub struct BitRun {
    pub psi_bits: Vec<u64>,
    pub model_bytes: Vec<u8>,
}

/// Drives `rounds` rounds on an equal split of a small dataset and
/// returns bit-level outcomes for exact comparisons.
pub fn bit_run(
    strategy: StrategyConfig,
    kpfl: Option<KpflConfig>,
    rounds: usize,
    seed: u64,
) -> Result<BitRun> {
    let root = Rng::from_seed(seed);
    let spec = DatasetSpec {
        num_classes: 4,
        input_dim: 10,
        samples_per_class: 40,
        ..DatasetSpec::default()
    };
    let dataset = generate(&spec, &mut root.split("data"))?;
    let partition = partition_equal(&dataset, 4)?;
    let driver = RoundDriver::new(
        &dataset,
        &partition,
        strategy,
        ParticipationModel::Static,
        root.split("train"),
        root.split("part"),
    )?;
    let mut plugin = match kpfl {
        Some(cfg) => Some(KpflPlugin::new(
            cfg,
            partition.class_totals(),
            dataset.train_x.cols(),
            root.split("kpfl"),
        )?),
        None => None,
    };
    let initial = MlpModel::init(&[10, 12, 4], &mut root.split("init"))?;
    let mut server = Server::new(initial, &partition);
    let mut psi_bits = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let record = driver.run_round(
            &mut server,
            plugin.as_mut().map(|p| p as &mut dyn RoundPlugin),
        )?;
        psi_bits.push(record.psi.to_bits());
    }
    Ok(BitRun {
        psi_bits,
        model_bytes: model_to_bytes(&server.global),
    })
}

/// The degenerate pool configuration that must reproduce plain averaging:
/// no age decay, no generator training, no distillation.
pub fn degenerate_kpfl() -> KpflConfig {
    KpflConfig {
        lambda_aa: 0.0,
        lambda_ia: 0.0,
        generator_steps: 0,
        distill_steps: 0,
        ..KpflConfig::default()
    }
}

pub fn fedavg_strategy() -> StrategyConfig {
    StrategyConfig {
        kind: StrategyKind::FedAvg,
        local_epochs: 2,
        sgd: dpfl_core::numkit::SgdConfig {
            batch_size: 16,
            ..Default::default()
        },
        ..Default::default()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

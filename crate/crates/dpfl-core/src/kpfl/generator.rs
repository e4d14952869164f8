use serde::{Deserialize, Serialize};

use crate::numkit::{backward_through, forward_trace, ForwardTrace, MlpModel, Rng, Tensor2};
use crate::{Error, Result};

/// Architecture of the conditional sample generator.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSpec {
    pub latent_dim: usize,
    pub label_embedding_dim: usize,
    pub hidden: Vec<usize>,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            latent_dim: 16,
            label_embedding_dim: 8,
            hidden: vec![64, 64],
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("generator latent_dim must be positive".into()));
        }
        if self.label_embedding_dim == 0 {
            return Err(Error::Config(
                "generator label_embedding_dim must be positive".into(),
            ));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config(
                "generator hidden widths must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Label-conditional generator: a learned class embedding concatenated to a
/// latent draw, mapped through an MLP to sample space.
#[derive(Clone, Debug)]
pub struct Generator {
    embedding: Tensor2,
    mlp: MlpModel,
}

impl Generator {
    pub fn init(spec: &GeneratorSpec, num_classes: usize, output_dim: usize, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        if num_classes == 0 || output_dim == 0 {
            return Err(Error::Config(
                "generator needs at least one class and one output dimension".into(),
            ));
        }
        let emb_scale = 1.0 / (spec.label_embedding_dim as f64).sqrt();
        let embedding = Tensor2::from_fn(num_classes, spec.label_embedding_dim, |_, _| {
            rng.normal(0.0, emb_scale)
        });
        let mut dims = vec![spec.latent_dim + spec.label_embedding_dim];
        dims.extend_from_slice(&spec.hidden);
        dims.push(output_dim);
        let mlp = MlpModel::init(&dims, rng)?;
        Ok(Generator { embedding, mlp })
    }

    pub fn num_classes(&self) -> usize {
        self.embedding.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.mlp.in_dim() - self.embedding.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.mlp.out_dim()
    }

    /// Concatenates `[z | embedding[label]]` row by row.
    fn build_input(&self, z: &Tensor2, labels: &[usize]) -> Result<Tensor2> {
        if z.cols() != self.latent_dim() {
            return Err(Error::shape(
                "generator latent",
                format!("{}", self.latent_dim()),
                format!("{}", z.cols()),
            ));
        }
        if labels.len() != z.rows() {
            return Err(Error::shape(
                "generator labels",
                format!("{}", z.rows()),
                format!("{}", labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.num_classes()) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {} classes",
                self.num_classes()
            )));
        }
        let latent = self.latent_dim();
        let emb = self.embedding.cols();
        let mut input = Tensor2::zeros(z.rows(), latent + emb);
        for b in 0..z.rows() {
            let row = input.row_mut(b);
            row[..latent].copy_from_slice(z.row(b));
            row[latent..].copy_from_slice(self.embedding.row(labels[b]));
        }
        Ok(input)
    }

    /// Forward pass retaining the trace needed for a backward pass.
    /// Returns the cached trace; the synthetic batch is `trace` logits.
    pub fn generate_trace(&self, z: &Tensor2, labels: &[usize]) -> Result<ForwardTrace> {
        let input = self.build_input(z, labels)?;
        forward_trace(&self.mlp, &input)
    }

    /// Synthetic batch for latent draws `z` under `labels`.
    pub fn generate(&self, z: &Tensor2, labels: &[usize]) -> Result<Tensor2> {
        Ok(self.generate_trace(z, labels)?.logits().clone())
    }

    /// Parameter views, embedding first then MLP layers.
    pub fn params(&self) -> Vec<&Tensor2> {
        let mut params = vec![&self.embedding];
        params.extend(self.mlp.params());
        params
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut params = vec![&mut self.embedding];
        params.extend(self.mlp.params_mut());
        params
    }

    /// Gradients in `params()` order for an upstream gradient `d_xhat` on
    /// the generated batch. Embedding rows accumulate over repeated labels.
    pub fn backward(&self, labels: &[usize], trace: &ForwardTrace, d_xhat: &Tensor2) -> Result<Vec<Tensor2>> {
        let (mlp_grads, d_input) =
            backward_through(&self.mlp, trace, self.mlp.num_layers(), d_xhat)?;
        let latent = self.latent_dim();
        let mut d_emb = Tensor2::zeros(self.embedding.rows(), self.embedding.cols());
        for (b, &y) in labels.iter().enumerate() {
            let src = &d_input.row(b)[latent..];
            for (dst, &g) in d_emb.row_mut(y).iter_mut().zip(src) {
                *dst += g;
            }
        }
        let mut grads = vec![d_emb];
        grads.extend(mlp_grads);
        Ok(grads)
    }
}

/// Standard normal latent batch.
pub fn sample_latent(batch: usize, latent_dim: usize, rng: &mut Rng) -> Tensor2 {
    Tensor2::from_fn(batch, latent_dim, |_, _| rng.normal(0.0, 1.0))
}

/// Labels drawn from the federation's class distribution.
pub fn sample_labels(batch: usize, class_totals: &[usize], rng: &mut Rng) -> Result<Vec<usize>> {
    let weights: Vec<f64> = class_totals.iter().map(|&n| n as f64).collect();
    (0..batch).map(|_| rng.categorical(&weights)).collect()
}

/// Convenience draw: a synthetic batch plus its conditioning labels.
pub fn sample_generator(
    gen: &Generator,
    batch: usize,
    class_totals: &[usize],
    rng: &mut Rng,
) -> Result<(Tensor2, Vec<usize>)> {
    let z = sample_latent(batch, gen.latent_dim(), rng);
    let labels = sample_labels(batch, class_totals, rng)?;
    let xhat = gen.generate(&z, &labels)?;
    Ok((xhat, labels))
}

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::{Error, Result};

/// Splittable deterministic random stream.
///
/// A stream is identified by a 64-bit seed. [`Rng::split`] derives a child
/// stream from the *seed* and a label, never from the parent's stream
/// position, so sibling streams are independent of each other's consumption
/// order and a child can be re-derived at any time. Splitting twice with the
/// same label yields the same stream by design.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: ChaCha8Rng,
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(label: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Rng {
            seed,
            stream: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream keyed by `label`; does not consume from `self`.
    pub fn split(&self, label: &str) -> Rng {
        Rng::from_seed(splitmix64(self.seed ^ fnv1a(label)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.stream.random()
    }

    /// Uniform draw from [0, 1).
    pub fn f64(&mut self) -> f64 {
        self.stream.random()
    }

    /// Standard normal draw scaled to N(mu, sigma^2).
    pub fn normal(&mut self, mu: f64, sigma: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.stream);
        mu + sigma * z
    }

    /// Gamma(shape, 1) draw; shape must be positive and finite.
    pub fn gamma(&mut self, shape: f64) -> Result<f64> {
        let dist = Gamma::new(shape, 1.0)
            .map_err(|e| Error::InvalidArgument(format!("gamma shape {shape}: {e}")))?;
        Ok(dist.sample(&mut self.stream))
    }

    /// Bernoulli(p) draw; exact at the endpoints (p=0 never, p=1 always).
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.f64() < p
    }

    /// Uniform index in [0, n).
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be non-empty");
        self.stream.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        slice.shuffle(&mut self.stream);
    }

    /// Draws a category from an unnormalized, non-negative weight vector.
    pub fn categorical(&mut self, weights: &[f64]) -> Result<usize> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Degenerate(
                "categorical weights must be non-negative with positive sum".into(),
            ));
        }
        let u = self.f64() * total;
        let mut acc = 0.0;
        for (k, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return Ok(k);
            }
        }
        // Rounding can push u past the last boundary; return the last
        // positive-weight category.
        Ok(weights
            .iter()
            .rposition(|w| *w > 0.0)
            .expect("positive total implies a positive weight"))
    }
}

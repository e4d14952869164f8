//! Synthetic classification data and label-skew partitioning.
//!
//! Data is drawn from one isotropic Gaussian cluster per class. Client
//! shards come from a per-class Dirichlet draw (sampled as normalized
//! Gamma(alpha, 1) variates), so a single `alpha` controls label skew:
//! large alpha approaches IID shards, small alpha concentrates each class
//! on few clients.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::numkit::{Rng, Tensor2};
use crate::{Error, Result};

/// Shape of the synthetic dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub input_dim: usize,
    pub samples_per_class: usize,
    /// Distance of each class center from the origin.
    pub class_center_separation: f64,
    /// Isotropic noise scale around each center.
    pub noise_sigma: f64,
    /// Tail fraction of each class block held out for evaluation.
    pub test_fraction: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            num_classes: 8,
            input_dim: 32,
            samples_per_class: 125,
            class_center_separation: 4.0,
            noise_sigma: 1.0,
            test_fraction: 0.2,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        if self.samples_per_class < 2 {
            return Err(Error::Config(
                "samples_per_class must be at least 2 (train + test)".into(),
            ));
        }
        if !(self.class_center_separation > 0.0 && self.class_center_separation.is_finite()) {
            return Err(Error::Config("class_center_separation must be positive".into()));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) || self.test_fraction <= 0.0 {
            return Err(Error::Config("test_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Generated data. Train rows are grouped by class (all class 0 first);
/// the partitioner shuffles within each class, so the grouping carries no
/// bias into client shards.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train_x: Tensor2,
    pub train_y: Vec<usize>,
    pub test_x: Tensor2,
    pub test_y: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn train_len(&self) -> usize {
        self.train_y.len()
    }

    /// Train sample count per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &y in &self.train_y {
            counts[y] += 1;
        }
        counts
    }
}

/// Class centers: axis-aligned `separation * e_k` while classes fit the
/// input dimension, random unit directions otherwise.
fn class_centers(spec: &DatasetSpec, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut centers = Vec::with_capacity(spec.num_classes);
    for k in 0..spec.num_classes {
        let mut c = vec![0.0; spec.input_dim];
        if spec.num_classes <= spec.input_dim {
            c[k] = spec.class_center_separation;
        } else {
            loop {
                for v in c.iter_mut() {
                    *v = rng.normal(0.0, 1.0);
                }
                let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-8 {
                    for v in c.iter_mut() {
                        *v *= spec.class_center_separation / norm;
                    }
                    break;
                }
            }
        }
        centers.push(c);
    }
    centers
}

/// Draws the dataset. Per class, the last `test_fraction` of generated
/// samples form the test split (at least one sample stays on each side).
pub fn generate(spec: &DatasetSpec, rng: &mut Rng) -> Result<Dataset> {
    spec.validate()?;
    let centers = class_centers(spec, rng);
    let n = spec.samples_per_class;
    let test_per_class = ((n as f64 * spec.test_fraction).round() as usize).clamp(1, n - 1);
    let train_per_class = n - test_per_class;

    let mut train_x = Vec::with_capacity(spec.num_classes * train_per_class * spec.input_dim);
    let mut train_y = Vec::with_capacity(spec.num_classes * train_per_class);
    let mut test_x = Vec::with_capacity(spec.num_classes * test_per_class * spec.input_dim);
    let mut test_y = Vec::with_capacity(spec.num_classes * test_per_class);

    for (k, center) in centers.iter().enumerate() {
        for s in 0..n {
            let row: Vec<f64> = center
                .iter()
                .map(|&c| c + rng.normal(0.0, spec.noise_sigma))
                .collect();
            if s < train_per_class {
                train_x.extend_from_slice(&row);
                train_y.push(k);
            } else {
                test_x.extend_from_slice(&row);
                test_y.push(k);
            }
        }
    }

    Ok(Dataset {
        train_x: Tensor2::from_vec(train_y.len(), spec.input_dim, train_x)?,
        train_y,
        test_x: Tensor2::from_vec(test_y.len(), spec.input_dim, test_x)?,
        test_y,
        num_classes: spec.num_classes,
    })
}

/// Named label-skew levels and their Dirichlet concentration values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heterogeneity {
    Iid,
    LightNiid,
    HeavyNiid,
}

impl Heterogeneity {
    pub fn alpha(self) -> f64 {
        match self {
            Heterogeneity::Iid => 100.0,
            Heterogeneity::LightNiid => 1.0,
            Heterogeneity::HeavyNiid => 0.1,
        }
    }
}

impl fmt::Display for Heterogeneity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Heterogeneity::Iid => "iid",
            Heterogeneity::LightNiid => "light_niid",
            Heterogeneity::HeavyNiid => "heavy_niid",
        })
    }
}

impl FromStr for Heterogeneity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(Heterogeneity::Iid),
            "light_niid" => Ok(Heterogeneity::LightNiid),
            "heavy_niid" => Ok(Heterogeneity::HeavyNiid),
            other => Err(Error::Config(format!(
                "unknown heterogeneity level '{other}' (expected iid, light_niid, heavy_niid)"
            ))),
        }
    }
}

/// Concentration for a named heterogeneity level.
pub fn heterogeneity_preset(level: &str) -> Result<f64> {
    Heterogeneity::from_str(level).map(Heterogeneity::alpha)
}

/// A client assignment of train indices plus the per-client class counts.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    /// Train-set indices per client, ascending within each client.
    pub client_indices: Vec<Vec<usize>>,
    /// `counts[i][j]` = samples of class j held by client i.
    pub counts: Vec<Vec<usize>>,
    /// Concentration used to draw the partition (infinity for equal splits).
    pub alpha: f64,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.client_indices.len()
    }

    pub fn num_classes(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    /// Total samples of each class across clients.
    pub fn class_totals(&self) -> Vec<usize> {
        let mut totals = vec![0usize; self.num_classes()];
        for row in &self.counts {
            for (t, c) in totals.iter_mut().zip(row) {
                *t += c;
            }
        }
        totals
    }

    pub fn client_sizes(&self) -> Vec<usize> {
        self.client_indices.iter().map(Vec::len).collect()
    }

    pub fn total_samples(&self) -> usize {
        self.client_indices.iter().map(Vec::len).sum()
    }

    /// Clients that received no samples at all.
    pub fn empty_clients(&self) -> Vec<usize> {
        self.client_indices
            .iter()
            .enumerate()
            .filter(|(_, idx)| idx.is_empty())
            .map(|(i, _)| i)
            .collect()
    }

    /// Wide CSV: one row per client with per-class counts and the total.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("client");
        for j in 0..self.num_classes() {
            out.push_str(&format!(",class_{j}"));
        }
        out.push_str(",total\n");
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&format!("{i}"));
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push_str(&format!(",{}\n", row.iter().sum::<usize>()));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "num_clients": self.num_clients(),
            "num_classes": self.num_classes(),
            "alpha": if self.alpha.is_finite() { serde_json::json!(self.alpha) } else { serde_json::json!("equal") },
            "class_totals": self.class_totals(),
            "client_sizes": self.client_sizes(),
            "empty_clients": self.empty_clients(),
        })
    }

    pub fn write_summary_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.summary_json())? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// One Dirichlet(alpha, ..., alpha) draw over `n` categories via
/// normalized Gamma(alpha, 1) variates.
pub(crate) fn dirichlet_draw(rng: &mut Rng, alpha: f64, n: usize) -> Result<Vec<f64>> {
    let mut draws = Vec::with_capacity(n);
    let mut total = 0.0;
    for _ in 0..n {
        let g = rng.gamma(alpha)?;
        total += g;
        draws.push(g);
    }
    // Gamma draws can underflow to zero for tiny alpha; a degenerate total
    // falls back to one category, which is what alpha -> 0 converges to.
    if total <= 0.0 {
        let mut p = vec![0.0; n];
        p[rng.index(n)] = 1.0;
        return Ok(p);
    }
    for d in draws.iter_mut() {
        *d /= total;
    }
    Ok(draws)
}

/// Apportions `n` items to shares `p` (non-negative, summing to ~1) with
/// largest-remainder rounding; fractional-part ties break toward the lower
/// index.
pub(crate) fn largest_remainder(p: &[f64], n: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = p.iter().map(|&s| (s * n as f64).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..p.len()).collect();
    // Sort by descending fractional part, then ascending index.
    order.sort_by(|&a, &b| {
        let fa = p[a] * n as f64 - (p[a] * n as f64).floor();
        let fb = p[b] * n as f64 - (p[b] * n as f64).floor();
        fb.partial_cmp(&fa)
            .expect("finite shares")
            .then(a.cmp(&b))
    });
    for k in 0..n.saturating_sub(assigned) {
        counts[order[k % order.len()]] += 1;
    }
    counts
}

fn class_index_lists(dataset: &Dataset) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); dataset.num_classes];
    for (idx, &y) in dataset.train_y.iter().enumerate() {
        by_class[y].push(idx);
    }
    by_class
}

fn partition_from_assignment(
    assignment: Vec<Vec<usize>>,
    num_classes: usize,
    labels: &[usize],
    alpha: f64,
) -> Partition {
    let counts = assignment
        .iter()
        .map(|idx| {
            let mut row = vec![0usize; num_classes];
            for &i in idx {
                row[labels[i]] += 1;
            }
            row
        })
        .collect();
    let client_indices = assignment
        .into_iter()
        .map(|mut idx| {
            idx.sort_unstable();
            idx
        })
        .collect();
    Partition {
        client_indices,
        counts,
        alpha,
    }
}

/// Dirichlet label-skew partition: per class, client shares are one
/// Dirichlet draw and sample counts follow by largest-remainder rounding.
/// Every train sample lands on exactly one client; a client may end up
/// empty (flagged in the summary).
pub fn partition_dirichlet(
    dataset: &Dataset,
    num_clients: usize,
    alpha: f64,
    rng: &mut Rng,
) -> Result<Partition> {
    if num_clients == 0 {
        return Err(Error::Config("num_clients must be positive".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    if dataset.train_len() == 0 {
        return Err(Error::Degenerate("empty train set".into()));
    }
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
    for (k, mut indices) in class_index_lists(dataset).into_iter().enumerate() {
        let mut class_rng = rng.split(&format!("class/{k}"));
        class_rng.shuffle(&mut indices);
        let shares = dirichlet_draw(&mut class_rng, alpha, num_clients)?;
        let counts = largest_remainder(&shares, indices.len());
        let mut cursor = 0;
        for (client, &take) in counts.iter().enumerate() {
            assignment[client].extend_from_slice(&indices[cursor..cursor + take]);
            cursor += take;
        }
        debug_assert_eq!(cursor, indices.len());
    }
    Ok(partition_from_assignment(
        assignment,
        dataset.num_classes,
        &dataset.train_y,
        alpha,
    ))
}

/// Deterministic near-equal split: within each class, sample `m` goes to
/// client `m mod num_clients`. When every class count divides evenly the
/// shards are exactly identical in composition.
pub fn partition_equal(dataset: &Dataset, num_clients: usize) -> Result<Partition> {
    if num_clients == 0 {
        return Err(Error::Config("num_clients must be positive".into()));
    }
    if dataset.train_len() == 0 {
        return Err(Error::Degenerate("empty train set".into()));
    }
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
    for indices in class_index_lists(dataset) {
        for (m, &idx) in indices.iter().enumerate() {
            assignment[m % num_clients].push(idx);
        }
    }
    Ok(partition_from_assignment(
        assignment,
        dataset.num_classes,
        &dataset.train_y,
        f64::INFINITY,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> DatasetSpec {
        DatasetSpec {
            num_classes: 4,
            input_dim: 8,
            samples_per_class: 250,
            class_center_separation: 10.0,
            noise_sigma: 1.0,
            test_fraction: 0.2,
        }
    }

    #[test]
    fn split_arithmetic_matches_spec_counts() {
        let mut rng = Rng::from_seed(1);
        let ds = generate(&small_spec(), &mut rng).unwrap();
        assert_eq!(ds.train_len(), 800);
        assert_eq!(ds.test_y.len(), 200);
        let mut per_class = vec![0usize; 4];
        for &y in &ds.test_y {
            per_class[y] += 1;
        }
        assert_eq!(per_class, vec![50; 4]);
        assert_eq!(ds.class_counts(), vec![200; 4]);
    }

    #[test]
    fn vanishing_noise_collapses_to_centers() {
        let spec = DatasetSpec {
            noise_sigma: 1e-15,
            ..small_spec()
        };
        let mut rng = Rng::from_seed(2);
        let ds = generate(&spec, &mut rng).unwrap();
        for (r, &y) in ds.train_y.iter().enumerate() {
            let row = ds.train_x.row(r);
            for (c, &v) in row.iter().enumerate() {
                let expect = if c == y { 10.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nearest_centroid_oracle_separates_classes() {
        let mut rng = Rng::from_seed(3);
        let ds = generate(&small_spec(), &mut rng).unwrap();
        // Train centroids.
        let k = ds.num_classes;
        let d = ds.train_x.cols();
        let mut centroids = vec![vec![0.0; d]; k];
        let counts = ds.class_counts();
        for (r, &y) in ds.train_y.iter().enumerate() {
            for (c, v) in centroids[y].iter_mut().enumerate() {
                *v += ds.train_x.get(r, c) / counts[y] as f64;
            }
        }
        let mut correct = 0;
        for (r, &y) in ds.test_y.iter().enumerate() {
            let row = ds.test_x.row(r);
            let best = (0..k)
                .min_by(|&a, &b| {
                    let da: f64 = row.iter().zip(&centroids[a]).map(|(x, c)| (x - c).powi(2)).sum();
                    let db: f64 = row.iter().zip(&centroids[b]).map(|(x, c)| (x - c).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if best == y {
                correct += 1;
            }
        }
        let acc = correct as f64 / ds.test_y.len() as f64;
        assert!(acc > 0.99, "nearest-centroid accuracy {acc}");
    }

    #[test]
    fn more_classes_than_dims_get_unit_norm_centers() {
        let spec = DatasetSpec {
            num_classes: 5,
            input_dim: 2,
            samples_per_class: 4,
            noise_sigma: 1e-15,
            class_center_separation: 3.0,
            test_fraction: 0.25,
        };
        let mut rng = Rng::from_seed(4);
        let ds = generate(&spec, &mut rng).unwrap();
        for r in 0..ds.train_x.rows() {
            let norm: f64 = ds.train_x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn spec_validation_rejects_bad_values() {
        for bad in [
            DatasetSpec { num_classes: 1, ..small_spec() },
            DatasetSpec { input_dim: 0, ..small_spec() },
            DatasetSpec { samples_per_class: 1, ..small_spec() },
            DatasetSpec { noise_sigma: 0.0, ..small_spec() },
            DatasetSpec { class_center_separation: -1.0, ..small_spec() },
            DatasetSpec { test_fraction: 0.0, ..small_spec() },
            DatasetSpec { test_fraction: 1.0, ..small_spec() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn preset_values() {
        assert_eq!(heterogeneity_preset("iid").unwrap(), 100.0);
        assert_eq!(heterogeneity_preset("light_niid").unwrap(), 1.0);
        assert_eq!(heterogeneity_preset("heavy_niid").unwrap(), 0.1);
        assert!(heterogeneity_preset("medium").is_err());
    }

    #[test]
    fn largest_remainder_conserves_and_breaks_ties_low() {
        assert_eq!(largest_remainder(&[0.5, 0.5], 5), vec![3, 2]);
        assert_eq!(largest_remainder(&[1.0 / 3.0; 3], 10), vec![4, 3, 3]);
        let p = [0.21, 0.19, 0.35, 0.25];
        let c = largest_remainder(&p, 97);
        assert_eq!(c.iter().sum::<usize>(), 97);
    }

    #[test]
    fn single_client_takes_everything() {
        let mut rng = Rng::from_seed(5);
        let ds = generate(&small_spec(), &mut rng).unwrap();
        let p = partition_dirichlet(&ds, 1, 0.1, &mut rng.split("part")).unwrap();
        assert_eq!(p.client_indices[0].len(), ds.train_len());
        assert_eq!(p.class_totals(), ds.class_counts());
        assert!(p.empty_clients().is_empty());
    }

    #[test]
    fn partition_conserves_samples_and_matches_labels() {
        let mut rng = Rng::from_seed(6);
        let ds = generate(&small_spec(), &mut rng).unwrap();
        for alpha in [0.1, 1.0, 100.0] {
            let p = partition_dirichlet(&ds, 7, alpha, &mut rng.split(&format!("a{alpha}"))).unwrap();
            assert_eq!(p.class_totals(), ds.class_counts());
            assert_eq!(p.total_samples(), ds.train_len());
            // No duplicates across clients.
            let mut seen = vec![false; ds.train_len()];
            for idx in &p.client_indices {
                for &i in idx {
                    assert!(!seen[i], "index {i} assigned twice");
                    seen[i] = true;
                }
            }
            assert!(seen.iter().all(|&s| s));
            // Counts match actual labels.
            for (i, idx) in p.client_indices.iter().enumerate() {
                let mut row = vec![0usize; ds.num_classes];
                for &s in idx {
                    row[ds.train_y[s]] += 1;
                }
                assert_eq!(row, p.counts[i]);
            }
        }
    }

    #[test]
    fn high_alpha_shares_stay_near_uniform() {
        // alpha = 100, 10 clients: each client's class share should sit in
        // [0.06, 0.14] essentially always (the band is ~4 sigma wide).
        let spec = DatasetSpec {
            num_classes: 4,
            input_dim: 2,
            samples_per_class: 1250,
            class_center_separation: 5.0,
            noise_sigma: 1.0,
            test_fraction: 0.2,
        };
        let mut rng = Rng::from_seed(7);
        let ds = generate(&spec, &mut rng).unwrap();
        let mut in_band = 0usize;
        let mut total = 0usize;
        for rep in 0..50 {
            let p =
                partition_dirichlet(&ds, 10, 100.0, &mut rng.split(&format!("rep{rep}"))).unwrap();
            let totals = p.class_totals();
            for j in 0..spec.num_classes {
                total += 1;
                let ok = (0..10).all(|i| {
                    let share = p.counts[i][j] as f64 / totals[j] as f64;
                    (0.06..=0.14).contains(&share)
                });
                if ok {
                    in_band += 1;
                }
            }
        }
        let frac = in_band as f64 / total as f64;
        assert!(frac >= 0.98, "in-band fraction {frac}");
    }

    #[test]
    fn low_alpha_concentrates_classes() {
        let mut rng = Rng::from_seed(8);
        let ds = generate(&small_spec(), &mut rng).unwrap();
        let p = partition_dirichlet(&ds, 10, 0.1, &mut rng.split("p")).unwrap();
        let totals = p.class_totals();
        // For alpha=0.1 the top client should hold a large share of each class.
        for j in 0..ds.num_classes {
            let top = (0..10).map(|i| p.counts[i][j]).max().unwrap();
            let share = top as f64 / totals[j] as f64;
            assert!(share > 0.3, "class {j} top share {share}");
        }
    }

    #[test]
    fn dirichlet_moments_match_theory() {
        // Dirichlet(alpha...alpha) over n categories:
        // E[p] = 1/n, Var[p] = (1/n)(1 - 1/n)/(n*alpha + 1).
        let (n, alpha, reps) = (5usize, 2.0, 20_000usize);
        let mut rng = Rng::from_seed(9);
        let mut draws = Vec::with_capacity(reps);
        for _ in 0..reps {
            draws.push(dirichlet_draw(&mut rng, alpha, n).unwrap()[0]);
        }
        let mean = draws.iter().sum::<f64>() / reps as f64;
        let var = draws.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let expect_mean = 1.0 / n as f64;
        let expect_var = expect_mean * (1.0 - expect_mean) / (n as f64 * alpha + 1.0);
        let se_mean = (expect_var / reps as f64).sqrt();
        let se_var = expect_var * (2.0 / (reps as f64 - 1.0)).sqrt();
        assert!((mean - expect_mean).abs() < 4.0 * se_mean, "mean {mean}");
        assert!((var - expect_var).abs() < 4.0 * se_var, "var {var}");
    }

    #[test]
    fn equal_partition_balances_when_divisible() {
        let mut rng = Rng::from_seed(10);
        let ds = generate(&small_spec(), &mut rng).unwrap();
        // 200 train per class, 10 clients: exactly 20 per class per client.
        let p = partition_equal(&ds, 10).unwrap();
        for row in &p.counts {
            assert_eq!(row, &vec![20usize; 4]);
        }
    }

    #[test]
    fn partition_exports_are_stable() {
        let mut rng = Rng::from_seed(11);
        let ds = generate(&small_spec(), &mut rng).unwrap();
        let p = partition_dirichlet(&ds, 3, 1.0, &mut rng.split("p")).unwrap();
        let csv = p.to_csv_string();
        assert!(csv.starts_with("client,class_0,class_1,class_2,class_3,total\n"));
        assert_eq!(csv.lines().count(), 4);
        let json = p.summary_json();
        assert_eq!(json["num_clients"], 3);
        assert_eq!(json["alpha"], 1.0);
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("partition.csv");
        p.write_csv(&csv_path).unwrap();
        assert_eq!(std::fs::read_to_string(&csv_path).unwrap(), csv);
    }

    #[test]
    fn partition_rejects_bad_args() {
        let mut rng = Rng::from_seed(12);
        let ds = generate(&small_spec(), &mut rng).unwrap();
        assert!(partition_dirichlet(&ds, 0, 1.0, &mut rng).is_err());
        assert!(partition_dirichlet(&ds, 5, 0.0, &mut rng).is_err());
        assert!(partition_dirichlet(&ds, 5, f64::NAN, &mut rng).is_err());
    }
}

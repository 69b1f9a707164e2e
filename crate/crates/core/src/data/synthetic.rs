use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DatasetBundle, Meta, Metric};
use crate::error::{config_err, Result};
use crate::label_trick::LabelSet;
use crate::nn::seeded_rng;
use crate::tensor::DenseMatrix;

/// Planted-partition (stochastic block model) generator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedPartition {
    pub n: usize,
    pub num_classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    pub feat_noise: f64,
    /// Fraction of nodes in the training split.
    pub label_rate: f64,
    /// Fraction of the remaining nodes used for validation; the rest is test.
    pub valid_share: f64,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        Self {
            n: 1000,
            num_classes: 4,
            p_in: 0.05,
            p_out: 0.005,
            feat_dim: 16,
            feat_noise: 1.0,
            label_rate: 0.6,
            valid_share: 0.5,
        }
    }
}

impl PlantedPartition {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return config_err(format!(
                "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            ));
        }
        if !(self.label_rate > 0.0 && self.label_rate < 1.0) {
            return config_err(format!("label rate {} outside (0, 1)", self.label_rate));
        }
        if !(0.0..=1.0).contains(&self.valid_share) {
            return config_err(format!("valid share {} outside [0, 1]", self.valid_share));
        }
        if self.num_classes < 2 || self.n < self.num_classes {
            return config_err("need at least two classes and one node per class");
        }
        if self.feat_dim == 0 || self.feat_noise.is_nan() || self.feat_noise < 0.0 {
            return config_err("need a positive feature width and a non-negative noise level");
        }
        Ok(())
    }
}

/// Draws a labeled graph: uniform classes; edges with probability `p_in`
/// within a class and `p_out` across; features are a per-class Gaussian mean
/// plus `feat_noise`-scaled Gaussian noise. The training split holds exactly
/// `round(label_rate · n)` nodes, spread proportionally over the classes.
pub fn gen_planted_partition(cfg: &PlantedPartition, seed: u64) -> Result<DatasetBundle> {
    cfg.validate()?;
    let (n, c) = (cfg.n, cfg.num_classes);
    let mut rng = seeded_rng(seed, 0x7070);

    let classes: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if classes[i] == classes[j] {
                cfg.p_in
            } else {
                cfg.p_out
            };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let means = DenseMatrix::from_fn(c, cfg.feat_dim, |_, _| rng.sample(StandardNormal));
    let features = DenseMatrix::from_fn(n, cfg.feat_dim, |i, k| {
        let noise: f64 = rng.sample(StandardNormal);
        means[(classes[i], k)] + cfg.feat_noise * noise
    });

    // Order nodes by their relative position inside a shuffled class list,
    // so every prefix is close to class-proportional.
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &k) in classes.iter().enumerate() {
        by_class[k].push(i);
    }
    let mut ranked: Vec<(f64, usize)> = Vec::with_capacity(n);
    for members in &mut by_class {
        members.shuffle(&mut rng);
        let size = members.len() as f64;
        ranked.extend(
            members
                .iter()
                .enumerate()
                .map(|(r, &i)| ((r as f64 + 0.5) / size, i)),
        );
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = ranked.into_iter().map(|(_, i)| i).collect();

    let n_train = ((cfg.label_rate * n as f64).round() as usize).clamp(1, n - 1);
    let n_valid = (cfg.valid_share * (n - n_train) as f64).round() as usize;
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    let train = sorted(&order[..n_train]);
    let valid = sorted(&order[n_train..n_train + n_valid]);
    let test = sorted(&order[n_train + n_valid..]);

    let labels = LabelSet::multiclass(classes, c, train, valid, test)?;
    let meta = Meta {
        name: "planted_partition".into(),
        num_classes: c,
        metric: Metric::Accuracy,
        normalize_features: false,
    };
    DatasetBundle::new(edges, None, features, labels, meta)
}

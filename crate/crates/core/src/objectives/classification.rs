use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{Domain, ModelVector, RngStream};

fn default_classes() -> usize {
    10
}
fn default_features() -> usize {
    20
}
fn default_pool() -> usize {
    10_000
}
fn default_alpha() -> f64 {
    1.0
}
fn default_batch() -> usize {
    25
}
fn default_separation() -> f64 {
    2.0
}

/// Gaussian-blob softmax regression with Dirichlet label skew across nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationSpec {
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    #[serde(default = "default_features")]
    pub num_features: usize,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    #[serde(default = "default_alpha")]
    pub dirichlet_alpha: f64,
    #[serde(default)]
    pub l2_reg: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Standard deviation of the class centres around the origin.
    #[serde(default = "default_separation")]
    pub class_separation: f64,
}

impl Default for ClassificationSpec {
    fn default() -> Self {
        Self {
            num_classes: default_classes(),
            num_features: default_features(),
            pool_size: default_pool(),
            dirichlet_alpha: default_alpha(),
            l2_reg: 0.0,
            batch_size: default_batch(),
            class_separation: default_separation(),
        }
    }
}

#[derive(Debug)]
struct Pool {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl ClassificationSpec {
    pub fn build(&self, num_nodes: usize, seed: u64) -> Result<ClassificationObjective> {
        if self.num_classes < 2 || self.num_features == 0 {
            return Err(invalid("classification needs >= 2 classes and >= 1 feature"));
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return Err(invalid("dirichlet_alpha must be > 0"));
        }
        if !(self.l2_reg >= 0.0 && self.l2_reg.is_finite()) {
            return Err(invalid("l2_reg must be >= 0"));
        }
        if self.batch_size == 0 || self.pool_size < self.num_classes || num_nodes == 0 {
            return Err(invalid(
                "batch_size >= 1, pool_size >= num_classes and num_nodes >= 1 required",
            ));
        }
        let classes = self.num_classes;
        let mut rng = RngStream::for_node_round(seed, Domain::OBJECTIVE, 0, 0);
        let centres: Vec<Vec<f64>> = (0..classes)
            .map(|_| {
                (0..self.num_features)
                    .map(|_| self.class_separation * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let mut features = Vec::with_capacity(self.pool_size);
        let mut labels = Vec::with_capacity(self.pool_size);
        let mut by_class = vec![Vec::new(); classes];
        for idx in 0..self.pool_size {
            let label = idx % classes;
            features.push(
                centres[label]
                    .iter()
                    .map(|c| c + rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            labels.push(label);
            by_class[label].push(idx);
        }

        let per_node = (self.pool_size / num_nodes).max(1);
        let gamma = Gamma::new(self.dirichlet_alpha, 1.0)
            .map_err(|e| invalid(format!("dirichlet_alpha: {e}")))?;
        let node_data = (0..num_nodes)
            .map(|node| {
                let mut rng = RngStream::for_node_round(seed, Domain::OBJECTIVE, node, 1);
                let proportions = dirichlet(&gamma, classes, &mut rng);
                (0..per_node)
                    .map(|_| {
                        let class = categorical(&proportions, &mut rng);
                        let members = &by_class[class];
                        members[rng.random_range(0..members.len())]
                    })
                    .collect()
            })
            .collect();

        Ok(ClassificationObjective {
            pool: Arc::new(Pool { features, labels }),
            node_data,
            num_classes: classes,
            num_features: self.num_features,
            l2_reg: self.l2_reg,
            batch_size: self.batch_size,
        })
    }
}

fn dirichlet<R: Rng + ?Sized>(gamma: &Gamma<f64>, k: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.into_iter().map(|g| g / total).collect()
    } else {
        // All gamma draws underflowed; put the mass on one class.
        let mut p = vec![0.0; k];
        p[rng.random_range(0..k)] = 1.0;
        p
    }
}

fn categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    p.iter()
        .rposition(|w| *w > 0.0)
        .unwrap_or(p.len() - 1)
}

/// Per-node softmax cross-entropy with optional L2 penalty.
///
/// Parameters are laid out as the row-major `classes x features` weight
/// matrix followed by one bias per class.
#[derive(Clone, Debug)]
pub struct ClassificationObjective {
    pool: Arc<Pool>,
    node_data: Vec<Vec<usize>>,
    num_classes: usize,
    num_features: usize,
    l2_reg: f64,
    batch_size: usize,
}

impl ClassificationObjective {
    pub fn dim(&self) -> usize {
        self.num_classes * (self.num_features + 1)
    }

    pub fn num_nodes(&self) -> usize {
        self.node_data.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Label histogram of one node's local dataset.
    pub fn class_counts(&self, node: usize) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &idx in &self.node_data[node] {
            counts[self.pool.labels[idx]] += 1;
        }
        counts
    }

    fn logits(&self, x: &[f64], features: &[f64]) -> Vec<f64> {
        let f = self.num_features;
        let bias = &x[self.num_classes * f..];
        (0..self.num_classes)
            .map(|c| {
                x[c * f..(c + 1) * f]
                    .iter()
                    .zip(features)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
                    + bias[c]
            })
            .collect()
    }

    fn softmax(logits: &[f64]) -> Vec<f64> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    fn sample_loss(&self, x: &[f64], idx: usize) -> f64 {
        let logits = self.logits(x, &self.pool.features[idx]);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        lse - logits[self.pool.labels[idx]]
    }

    fn accumulate_sample_gradient(&self, x: &[f64], idx: usize, weight: f64, out: &mut [f64]) {
        let features = &self.pool.features[idx];
        let mut p = Self::softmax(&self.logits(x, features));
        p[self.pool.labels[idx]] -= 1.0;
        let f = self.num_features;
        let bias_offset = self.num_classes * f;
        for (c, residual) in p.iter().enumerate() {
            let r = weight * residual;
            for (o, v) in out[c * f..(c + 1) * f].iter_mut().zip(features) {
                *o += r * v;
            }
            out[bias_offset + c] += r;
        }
    }

    fn add_penalty(&self, x: &[f64], out: &mut [f64]) {
        if self.l2_reg > 0.0 {
            for (o, v) in out.iter_mut().zip(x) {
                *o += self.l2_reg * v;
            }
        }
    }

    pub(crate) fn loss(&self, node: usize, x: &ModelVector) -> f64 {
        let data = &self.node_data[node];
        let data_loss =
            data.iter().map(|&idx| self.sample_loss(x, idx)).sum::<f64>() / data.len() as f64;
        data_loss + 0.5 * self.l2_reg * x.squared_norm()
    }

    pub(crate) fn gradient(&self, node: usize, x: &ModelVector) -> ModelVector {
        let data = &self.node_data[node];
        let mut out = vec![0.0; self.dim()];
        let w = 1.0 / data.len() as f64;
        for &idx in data {
            self.accumulate_sample_gradient(x, idx, w, &mut out);
        }
        self.add_penalty(x, &mut out);
        ModelVector::new(out)
    }

    pub(crate) fn stochastic_gradient<R: Rng + ?Sized>(
        &self,
        node: usize,
        x: &ModelVector,
        rng: &mut R,
    ) -> ModelVector {
        let data = &self.node_data[node];
        let mut out = vec![0.0; self.dim()];
        let w = 1.0 / self.batch_size as f64;
        for _ in 0..self.batch_size {
            let idx = data[rng.random_range(0..data.len())];
            self.accumulate_sample_gradient(x, idx, w, &mut out);
        }
        self.add_penalty(x, &mut out);
        ModelVector::new(out)
    }

    /// Fraction of the node's local samples classified correctly at `x`.
    pub fn accuracy(&self, node: usize, x: &ModelVector) -> f64 {
        let data = &self.node_data[node];
        let correct = data
            .iter()
            .filter(|&&idx| {
                let logits = self.logits(x, &self.pool.features[idx]);
                let best = logits
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(k, _)| k)
                    .unwrap_or(0);
                best == self.pool.labels[idx]
            })
            .count();
        correct as f64 / data.len() as f64
    }
}

//! Vector arithmetic over model parameters and seeded random streams.
//!
//! Every random draw in the crate goes through an [`RngStream`] keyed by
//! `(seed, domain, node, round)`, so the order in which nodes are processed
//! never changes the numbers a node sees.

use std::ops::{Deref, Index};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, RpelError};

/// A d-dimensional model parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ModelVector(Vec<f64>);

impl ModelVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    fn check_dim(&self, other: &ModelVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(RpelError::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &ModelVector) -> Result<ModelVector> {
        self.check_dim(other)?;
        Ok(ModelVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(x, y)| x + alpha * y)
                .collect(),
        ))
    }

    /// In-place `self += alpha * other`. Panics on dimension mismatch.
    pub fn axpy(&mut self, alpha: f64, other: &ModelVector) {
        assert_eq!(self.dim(), other.dim(), "axpy dimension mismatch");
        for (x, y) in self.0.iter_mut().zip(&other.0) {
            *x += alpha * y;
        }
    }

    pub fn sub(&self, other: &ModelVector) -> Result<ModelVector> {
        self.add_scaled(-1.0, other)
    }

    pub fn scale(&self, factor: f64) -> ModelVector {
        ModelVector(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn squared_norm(&self) -> f64 {
        squared_norm(self)
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    pub fn dot(&self, other: &ModelVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// Squared Euclidean distance. Panics on dimension mismatch.
    pub fn dist_sq(&self, other: &ModelVector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dist_sq dimension mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl From<Vec<f64>> for ModelVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Deref for ModelVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ModelVector {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// `x + alpha * y`.
pub fn add_scaled(x: &ModelVector, alpha: f64, y: &ModelVector) -> Result<ModelVector> {
    x.add_scaled(alpha, y)
}

pub fn squared_norm(x: &ModelVector) -> f64 {
    x.0.iter().map(|v| v * v).sum()
}

/// Checks that `vs` is nonempty with a common dimension, returning it.
pub fn common_dim<V: AsRef<ModelVector>>(vs: &[V]) -> Result<usize> {
    let first = vs
        .first()
        .ok_or_else(|| invalid("empty list of vectors"))?
        .as_ref()
        .dim();
    for v in vs {
        let d = v.as_ref().dim();
        if d != first {
            return Err(RpelError::DimensionMismatch {
                expected: first,
                actual: d,
            });
        }
    }
    Ok(first)
}

impl AsRef<ModelVector> for ModelVector {
    fn as_ref(&self) -> &ModelVector {
        self
    }
}

/// Per-coordinate mean and population standard deviation.
pub fn coordinate_stats<V: AsRef<ModelVector>>(vs: &[V]) -> Result<(ModelVector, ModelVector)> {
    let dim = common_dim(vs)?;
    let count = vs.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in vs {
        for (m, x) in mean.iter_mut().zip(v.as_ref().iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; dim];
    for v in vs {
        for ((s, x), m) in var.iter_mut().zip(v.as_ref().iter()).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    let std = var.into_iter().map(|s| (s / count).sqrt()).collect();
    Ok((ModelVector(mean), ModelVector(std)))
}

/// Arithmetic mean whose result does not depend on the order of `vs`:
/// each coordinate is summed in ascending value order.
pub fn symmetric_mean<V: AsRef<ModelVector>>(vs: &[V]) -> Result<ModelVector> {
    let dim = common_dim(vs)?;
    let mut column = Vec::with_capacity(vs.len());
    let out = (0..dim)
        .map(|k| {
            column.clear();
            column.extend(vs.iter().map(|v| v.as_ref()[k]));
            column.sort_by(f64::total_cmp);
            let avg = column.iter().sum::<f64>() / vs.len() as f64;
            // Rounding can push the average just outside the column range;
            // clamping makes constant columns reproduce their value exactly.
            avg.clamp(column[0], column[column.len() - 1])
        })
        .collect();
    Ok(ModelVector(out))
}

/// Plain arithmetic mean, summed in input order.
pub fn mean<V: AsRef<ModelVector>>(vs: &[V]) -> Result<ModelVector> {
    let dim = common_dim(vs)?;
    let mut acc = ModelVector::zeros(dim);
    for v in vs {
        acc.axpy(1.0, v.as_ref());
    }
    Ok(acc.scale(1.0 / vs.len() as f64))
}

/// Mean squared distance to the mean: `(1/k) sum ||v_i - mean||^2`.
pub fn mean_squared_deviation<V: AsRef<ModelVector>>(vs: &[V]) -> Result<f64> {
    let centre = mean(vs)?;
    Ok(vs.iter().map(|v| v.as_ref().dist_sq(&centre)).sum::<f64>() / vs.len() as f64)
}

/// Label separating independent uses of randomness under one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Domain(pub u64);

impl Domain {
    pub const INIT: Domain = Domain(1);
    pub const OBJECTIVE: Domain = Domain(2);
    pub const GRADIENT: Domain = Domain(3);
    pub const SAMPLING: Domain = Domain(4);
    pub const OUTPUT: Domain = Domain(5);
    pub const GRAPH: Domain = Domain(6);
    pub const SELECTION: Domain = Domain(7);
    pub const LEMMA: Domain = Domain(8);
    pub const MEASURE: Domain = Domain(9);
}

/// Identifies one stream under a seed: the `(node, round)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct StreamId {
    pub node: u64,
    pub round: u64,
}

impl StreamId {
    pub fn new(node: u64, round: u64) -> Self {
        Self { node, round }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic ChaCha8 stream keyed by `(seed, domain, node, round)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    domain: Domain,
    id: StreamId,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, domain: Domain, id: StreamId) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        // Fold domain and round into the key; the node selects the ChaCha stream.
        let mixers = [domain.0, id.round, domain.0 ^ id.round.rotate_left(32), seed];
        for (chunk, mix) in key.chunks_exact_mut(8).zip(mixers) {
            state ^= mix;
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(id.node);
        Self {
            seed,
            domain,
            id,
            rng,
        }
    }

    pub fn for_node_round(seed: u64, domain: Domain, node: usize, round: usize) -> Self {
        Self::new(seed, domain, StreamId::new(node as u64, round as u64))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn stream_id(&self) -> StreamId {
        self.id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

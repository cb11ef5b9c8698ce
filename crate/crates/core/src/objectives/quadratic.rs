use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{Domain, ModelVector, RngStream};

/// Diagonal curvature shared by every honest node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CurvatureSpec {
    /// `dim` entries evenly spaced from `mu` to `l`.
    Range { mu: f64, l: f64 },
    Diagonal(Vec<f64>),
}

impl Default for CurvatureSpec {
    fn default() -> Self {
        CurvatureSpec::Range { mu: 1.0, l: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MinimizerSpec {
    /// Each coordinate of each minimizer drawn from `N(center, spread^2)`.
    Gaussian { center: f64, spread: f64 },
    /// One minimizer per honest node.
    Explicit(Vec<Vec<f64>>),
}

impl Default for MinimizerSpec {
    fn default() -> Self {
        MinimizerSpec::Gaussian {
            center: 0.0,
            spread: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub dim: usize,
    #[serde(default)]
    pub curvature: CurvatureSpec,
    #[serde(default)]
    pub minimizers: MinimizerSpec,
    /// Standard deviation of the gradient noise; total variance is `noise_sigma^2`.
    #[serde(default)]
    pub noise_sigma: f64,
}

impl QuadraticSpec {
    pub fn build(&self, num_nodes: usize, seed: u64) -> Result<QuadraticObjective> {
        if self.dim == 0 {
            return Err(invalid("quadratic objective needs dim >= 1"));
        }
        let curvature = match &self.curvature {
            CurvatureSpec::Range { mu, l } => {
                if !(*mu > 0.0 && mu <= l) {
                    return Err(invalid("curvature range needs 0 < mu <= l"));
                }
                if self.dim == 1 {
                    vec![*l]
                } else {
                    (0..self.dim)
                        .map(|k| mu + (l - mu) * k as f64 / (self.dim - 1) as f64)
                        .collect()
                }
            }
            CurvatureSpec::Diagonal(diag) => diag.clone(),
        };
        let minimizers = match &self.minimizers {
            MinimizerSpec::Gaussian { center, spread } => (0..num_nodes)
                .map(|i| {
                    let mut rng = RngStream::for_node_round(seed, Domain::OBJECTIVE, i, 0);
                    ModelVector::new(
                        (0..self.dim)
                            .map(|_| center + spread * rng.sample::<f64, _>(StandardNormal))
                            .collect(),
                    )
                })
                .collect(),
            MinimizerSpec::Explicit(list) => {
                if list.len() != num_nodes {
                    return Err(invalid(format!(
                        "expected {num_nodes} explicit minimizers, got {}",
                        list.len()
                    )));
                }
                list.iter().cloned().map(ModelVector::new).collect()
            }
        };
        QuadraticObjective::new(curvature, minimizers, self.noise_sigma)
    }
}

/// `f_i(x) = 1/2 (x - theta_i)^T A (x - theta_i)` with a diagonal `A` shared by all nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticObjective {
    curvature: Vec<f64>,
    minimizers: Vec<ModelVector>,
    noise_sigma: f64,
}

impl QuadraticObjective {
    pub fn new(curvature: Vec<f64>, minimizers: Vec<ModelVector>, noise_sigma: f64) -> Result<Self> {
        if curvature.is_empty() || curvature.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(invalid("curvature entries must be finite and positive"));
        }
        if minimizers.is_empty() {
            return Err(invalid("quadratic objective needs at least one node"));
        }
        if minimizers
            .iter()
            .any(|m| m.dim() != curvature.len() || !m.is_finite())
        {
            return Err(invalid("minimizers must be finite and match the curvature dimension"));
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(invalid("noise_sigma must be finite and >= 0"));
        }
        Ok(Self {
            curvature,
            minimizers,
            noise_sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.curvature.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.minimizers.len()
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    pub fn minimizers(&self) -> &[ModelVector] {
        &self.minimizers
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn smoothness(&self) -> f64 {
        self.curvature.iter().copied().fold(0.0, f64::max)
    }

    /// Minimizer of the honest average, the mean of the node minimizers.
    pub fn global_minimizer(&self) -> ModelVector {
        crate::numerics::mean(&self.minimizers).expect("nonempty, checked at construction")
    }

    /// Exact heterogeneity `(1/|H|) sum ||grad f_i - grad F_H||^2`; constant in x
    /// because the curvature is shared.
    pub fn heterogeneity(&self) -> f64 {
        let centre = self.global_minimizer();
        self.minimizers
            .iter()
            .map(|theta| {
                theta
                    .iter()
                    .zip(centre.iter())
                    .zip(&self.curvature)
                    .map(|((t, c), a)| (a * (c - t)).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / self.num_nodes() as f64
    }

    pub(crate) fn loss(&self, node: usize, x: &ModelVector) -> f64 {
        let theta = &self.minimizers[node];
        0.5 * x
            .iter()
            .zip(theta.iter())
            .zip(&self.curvature)
            .map(|((x, t), a)| a * (x - t) * (x - t))
            .sum::<f64>()
    }

    pub(crate) fn gradient(&self, node: usize, x: &ModelVector) -> ModelVector {
        let theta = &self.minimizers[node];
        ModelVector::new(
            x.iter()
                .zip(theta.iter())
                .zip(&self.curvature)
                .map(|((x, t), a)| a * (x - t))
                .collect(),
        )
    }

    pub(crate) fn stochastic_gradient<R: Rng + ?Sized>(
        &self,
        node: usize,
        x: &ModelVector,
        rng: &mut R,
    ) -> ModelVector {
        let mut g = self.gradient(node, x);
        if self.noise_sigma > 0.0 {
            let per_coord = self.noise_sigma / (self.dim() as f64).sqrt();
            for v in g.as_mut_slice() {
                *v += per_coord * rng.sample::<f64, _>(StandardNormal);
            }
        }
        g
    }
}

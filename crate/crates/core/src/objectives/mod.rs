//! Synthetic local objectives `f_i` for the honest nodes.
//!
//! Two families are provided. Diagonal quadratics have a closed-form optimum
//! and exactly known smoothness, noise and heterogeneity constants, which makes
//! them the workhorse for checking convergence behaviour. Softmax regression on
//! Gaussian blobs with a Dirichlet label skew gives a classification task whose
//! heterogeneity is controlled by the concentration parameter.

mod classification;
mod quadratic;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use classification::{ClassificationObjective, ClassificationSpec};
pub use quadratic::{CurvatureSpec, MinimizerSpec, QuadraticObjective, QuadraticSpec};

use crate::error::{invalid, Result, RpelError};
use crate::numerics::{Domain, ModelVector, RngStream};

/// Serializable description of the honest objectives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Quadratic(QuadraticSpec),
    Classification(ClassificationSpec),
}

impl ObjectiveSpec {
    /// Materializes one local objective per honest node.
    pub fn build(&self, num_honest: usize, seed: u64) -> Result<HonestObjective> {
        Ok(match self {
            ObjectiveSpec::Quadratic(spec) => HonestObjective::Quadratic(spec.build(num_honest, seed)?),
            ObjectiveSpec::Classification(spec) => {
                HonestObjective::Classification(spec.build(num_honest, seed)?)
            }
        })
    }
}

/// The collection `{f_i : i in H}`; `F_H` is their plain average.
#[derive(Clone, Debug)]
pub enum HonestObjective {
    Quadratic(QuadraticObjective),
    Classification(ClassificationObjective),
}

impl From<QuadraticObjective> for HonestObjective {
    fn from(q: QuadraticObjective) -> Self {
        HonestObjective::Quadratic(q)
    }
}

impl From<ClassificationObjective> for HonestObjective {
    fn from(c: ClassificationObjective) -> Self {
        HonestObjective::Classification(c)
    }
}

/// Empirical smoothness, noise and heterogeneity constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConstantEstimates {
    pub l_est: f64,
    pub sigma2_est: f64,
    pub g2_est: f64,
}

impl HonestObjective {
    pub fn dim(&self) -> usize {
        match self {
            HonestObjective::Quadratic(q) => q.dim(),
            HonestObjective::Classification(c) => c.dim(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        match self {
            HonestObjective::Quadratic(q) => q.num_nodes(),
            HonestObjective::Classification(c) => c.num_nodes(),
        }
    }

    fn check(&self, node: usize, x: &ModelVector) -> Result<()> {
        if node >= self.num_nodes() {
            return Err(invalid(format!(
                "unknown honest node {node} (have {})",
                self.num_nodes()
            )));
        }
        if x.dim() != self.dim() {
            return Err(RpelError::DimensionMismatch {
                expected: self.dim(),
                actual: x.dim(),
            });
        }
        Ok(())
    }

    pub fn local_loss(&self, node: usize, x: &ModelVector) -> Result<f64> {
        self.check(node, x)?;
        Ok(match self {
            HonestObjective::Quadratic(q) => q.loss(node, x),
            HonestObjective::Classification(c) => c.loss(node, x),
        })
    }

    pub fn local_gradient(&self, node: usize, x: &ModelVector) -> Result<ModelVector> {
        self.check(node, x)?;
        Ok(match self {
            HonestObjective::Quadratic(q) => q.gradient(node, x),
            HonestObjective::Classification(c) => c.gradient(node, x),
        })
    }

    /// Unbiased stochastic estimate of `grad f_node(x)`.
    pub fn stochastic_gradient<R: Rng + ?Sized>(
        &self,
        node: usize,
        x: &ModelVector,
        rng: &mut R,
    ) -> Result<ModelVector> {
        self.check(node, x)?;
        Ok(match self {
            HonestObjective::Quadratic(q) => q.stochastic_gradient(node, x, rng),
            HonestObjective::Classification(c) => c.stochastic_gradient(node, x, rng),
        })
    }

    /// `F_H(x)`.
    pub fn global_loss(&self, x: &ModelVector) -> Result<f64> {
        let mut total = 0.0;
        for node in 0..self.num_nodes() {
            total += self.local_loss(node, x)?;
        }
        Ok(total / self.num_nodes() as f64)
    }

    /// `grad F_H(x)`, the exact average of the honest gradients.
    pub fn global_gradient(&self, x: &ModelVector) -> Result<ModelVector> {
        let mut acc = ModelVector::zeros(self.dim());
        for node in 0..self.num_nodes() {
            acc.axpy(1.0, &self.local_gradient(node, x)?);
        }
        Ok(acc.scale(1.0 / self.num_nodes() as f64))
    }

    /// `(1/|H|) sum_i ||grad f_i(x) - grad F_H(x)||^2`.
    pub fn heterogeneity_at(&self, x: &ModelVector) -> Result<f64> {
        let grads = (0..self.num_nodes())
            .map(|i| self.local_gradient(i, x))
            .collect::<Result<Vec<_>>>()?;
        crate::numerics::mean_squared_deviation(&grads)
    }

    /// Known optimum gap `F_H(x) - F_H*` when it is available in closed form.
    pub fn optimality_gap(&self, x: &ModelVector) -> Result<Option<f64>> {
        match self {
            HonestObjective::Quadratic(q) => {
                let star = q.global_minimizer();
                Ok(Some(self.global_loss(x)? - self.global_loss(&star)?))
            }
            HonestObjective::Classification(_) => Ok(None),
        }
    }

    /// Estimates `(L, sigma^2, G^2)` from probe points.
    ///
    /// `L` is the largest gradient-Lipschitz ratio over probe pairs and nodes,
    /// `sigma^2` the largest mean squared stochastic-gradient error over
    /// `noise_samples` draws per node and probe, and `G^2` the largest
    /// heterogeneity over probes.
    pub fn measure_constants(
        &self,
        probes: &[ModelVector],
        noise_samples: usize,
        seed: u64,
    ) -> Result<ConstantEstimates> {
        if probes.len() < 2 {
            return Err(invalid("measure_constants needs at least two probe points"));
        }
        let nodes = self.num_nodes();
        let grads: Vec<Vec<ModelVector>> = probes
            .iter()
            .map(|p| (0..nodes).map(|i| self.local_gradient(i, p)).collect())
            .collect::<Result<_>>()?;

        let mut l_est = 0.0f64;
        for a in 0..probes.len() {
            for b in a + 1..probes.len() {
                let dx = probes[a].dist_sq(&probes[b]).sqrt();
                if dx == 0.0 {
                    continue;
                }
                for (ga, gb) in grads[a].iter().zip(&grads[b]) {
                    l_est = l_est.max(ga.dist_sq(gb).sqrt() / dx);
                }
            }
        }

        let mut sigma2_est = 0.0f64;
        for (pi, probe) in probes.iter().enumerate() {
            for (i, exact) in grads[pi].iter().enumerate() {
                let mut rng = RngStream::for_node_round(seed, Domain::MEASURE, i, pi);
                let mut acc = 0.0;
                for _ in 0..noise_samples {
                    acc += self.stochastic_gradient(i, probe, &mut rng)?.dist_sq(exact);
                }
                if noise_samples > 0 {
                    sigma2_est = sigma2_est.max(acc / noise_samples as f64);
                }
            }
        }

        let mut g2_est = 0.0f64;
        for row in &grads {
            g2_est = g2_est.max(crate::numerics::mean_squared_deviation(row)?);
        }

        Ok(ConstantEstimates {
            l_est,
            sigma2_est,
            g2_est,
        })
    }
}

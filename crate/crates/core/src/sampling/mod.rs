//! Peer sampling and the hypergeometric theory behind the effective
//! adversarial fraction.
//!
//! Each round an honest node pulls `s` peers out of the other `n - 1`, so the
//! number of attackers it sees is `HG(n - 1, b, s)`. The helpers here bound the
//! worst case of that count over every honest node and round, either through
//! the entropy tail bound or by direct simulation.

mod bounds;
mod hypergeometric;
mod neighbors;
mod selection;

use serde::{Deserialize, Serialize};

pub use bounds::{kl_bernoulli, log_bound_s, tail_bound, threshold_s, SamplingThreshold};
pub use hypergeometric::{
    binomial_u128, hypergeom_cdf, hypergeom_pmf, hypergeom_pmf_exact, hypergeom_sample,
    hypergeom_sf, HypergeometricParams, HypergeometricSampler, URN_DRAW_LIMIT,
};
pub use neighbors::{sample_any, sample_neighbors};
pub use selection::{
    effective_fraction_sweep, max_quantile, select_hyperparameters, simulate_max_selected,
    FracSimRow, GridEntry, Selection, SelectionMode,
};

use crate::error::{invalid, Result};

/// Sampling hyperparameters for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionPlan {
    /// Total node count.
    pub n: usize,
    /// Byzantine node count.
    pub b: usize,
    /// Peers pulled per round.
    pub s: usize,
    /// Assumed bound on attackers among any node's pulled peers.
    pub b_hat: usize,
    /// Number of rounds `T`.
    pub rounds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

impl SelectionPlan {
    pub fn new(n: usize, b: usize, s: usize, b_hat: usize, rounds: usize) -> Self {
        Self {
            n,
            b,
            s,
            b_hat,
            rounds,
            p: None,
            q: None,
        }
    }

    pub fn num_honest(&self) -> usize {
        self.n - self.b
    }

    /// `h_hat = s + 1 - b_hat`.
    pub fn h_hat(&self) -> usize {
        self.s + 1 - self.b_hat
    }

    pub fn effective_fraction(&self) -> f64 {
        self.b_hat as f64 / (self.s + 1) as f64
    }

    /// Effective adversarial fraction strictly below one half.
    pub fn is_feasible(&self) -> bool {
        2 * self.b_hat < self.s + 1
    }

    /// Checks the structural invariants and feasibility.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("plan needs n >= 2"));
        }
        if self.b >= self.n / 2 && self.b > 0 {
            return Err(invalid(format!("plan needs b < floor(n/2), got b = {}", self.b)));
        }
        if self.s == 0 || self.s > self.n - 1 {
            return Err(invalid(format!("plan needs 1 <= s <= n - 1, got s = {}", self.s)));
        }
        if self.b_hat > self.b.min(self.s) {
            return Err(invalid("plan needs b_hat <= min(b, s)"));
        }
        if self.rounds == 0 {
            return Err(invalid("plan needs T >= 1"));
        }
        if let Some(p) = self.p {
            if !(p > 0.0 && p < 1.0) {
                return Err(invalid("plan confidence p must lie in (0, 1)"));
            }
        }
        if let Some(q) = self.q {
            if !(q >= self.b as f64 / self.n as f64 && q < 0.5) {
                return Err(invalid("plan target q must lie in [b/n, 1/2)"));
            }
        }
        if !self.is_feasible() {
            return Err(invalid(format!(
                "effective adversarial fraction {}/{} is not below 1/2",
                self.b_hat,
                self.s + 1
            )));
        }
        Ok(())
    }
}

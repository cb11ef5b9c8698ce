//! Aggregation rules applied to a node's own half-step model and the `s`
//! models it pulled, plus a harness that measures their robustness constant.
//!
//! A rule is `(s, b_hat, kappa)`-robust when, for every subset `U` of
//! `s + 1 - b_hat` inputs, `||R(v) - mean(U)||^2` is at most `kappa` times the
//! mean squared spread of `U`. Plain averaging has no finite `kappa`.

mod kappa;
mod rules;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use kappa::{empirical_kappa, RobustnessCertificate, KAPPA_ENUMERATION_CAP};
pub use rules::{agg_cwmed, agg_cwtm, agg_geomed, agg_krum, agg_mean, agg_nnm_cwtm, nnm_preaggregate};

use crate::error::{invalid, Result, RpelError};
use crate::numerics::ModelVector;

/// Aggregation rule selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Mean,
    Cwtm,
    Cwmed,
    NnmCwtm,
    Krum,
    Geomed,
}

impl Rule {
    pub const ALL: [Rule; 6] = [
        Rule::Mean,
        Rule::Cwtm,
        Rule::Cwmed,
        Rule::NnmCwtm,
        Rule::Krum,
        Rule::Geomed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Mean => "mean",
            Rule::Cwtm => "cwtm",
            Rule::Cwmed => "cwmed",
            Rule::NnmCwtm => "nnm_cwtm",
            Rule::Krum => "krum",
            Rule::Geomed => "geomed",
        }
    }

    /// Whether the rule needs `2 * b_hat < s + 1`.
    pub fn trims(self) -> bool {
        matches!(self, Rule::Cwtm | Rule::NnmCwtm)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = RpelError;

    fn from_str(s: &str) -> Result<Self> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| invalid(format!("unknown aggregation rule '{s}'")))
    }
}

/// A node's own model together with the `s` models it received.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregationInput {
    pub own: ModelVector,
    pub received: Vec<ModelVector>,
    pub b_hat: usize,
}

impl AggregationInput {
    pub fn new(own: ModelVector, received: Vec<ModelVector>, b_hat: usize) -> Result<Self> {
        let input = Self { own, received, b_hat };
        input.validate()?;
        Ok(input)
    }

    /// Builds an input from a flat list whose first entry is the node's own model.
    pub fn from_all(mut all: Vec<ModelVector>, b_hat: usize) -> Result<Self> {
        if all.is_empty() {
            return Err(invalid("aggregation needs at least the node's own model"));
        }
        let received = all.split_off(1);
        Self::new(all.pop().expect("nonempty"), received, b_hat)
    }

    pub fn s(&self) -> usize {
        self.received.len()
    }

    pub fn validate(&self) -> Result<()> {
        if 2 * self.b_hat > self.s() {
            return Err(invalid(format!(
                "b_hat = {} exceeds half of s = {}",
                self.b_hat,
                self.s()
            )));
        }
        for v in &self.received {
            if v.dim() != self.own.dim() {
                return Err(RpelError::DimensionMismatch {
                    expected: self.own.dim(),
                    actual: v.dim(),
                });
            }
        }
        Ok(())
    }

    /// All `s + 1` inputs, own model first.
    pub fn all(&self) -> Vec<&ModelVector> {
        std::iter::once(&self.own).chain(&self.received).collect()
    }
}

/// Applies `rule` to an already-assembled list of `s + 1` inputs.
pub fn aggregate_slice<V: AsRef<ModelVector>>(rule: Rule, vs: &[V], b_hat: usize) -> Result<ModelVector> {
    match rule {
        Rule::Mean => agg_mean(vs),
        Rule::Cwtm => agg_cwtm(vs, b_hat),
        Rule::Cwmed => agg_cwmed(vs),
        Rule::NnmCwtm => agg_nnm_cwtm(vs, b_hat),
        Rule::Krum => agg_krum(vs, b_hat),
        Rule::Geomed => agg_geomed(vs),
    }
}

pub fn aggregate(rule: Rule, input: &AggregationInput) -> Result<ModelVector> {
    input.validate()?;
    aggregate_slice(rule, &input.all(), input.b_hat)
}

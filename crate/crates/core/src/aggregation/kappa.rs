use rayon::prelude::*;
use serde::Serialize;

use super::{aggregate, AggregationInput, Rule};
use crate::error::{invalid, Result};
use crate::numerics::ModelVector;

/// Largest input count for which all honest subsets are enumerated.
pub const KAPPA_ENUMERATION_CAP: usize = 20;

/// Worst-case measured robustness constant of a rule on one instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessCertificate {
    pub rule: Rule,
    pub s: usize,
    pub b_hat: usize,
    pub dim: usize,
    /// `max_U ||R(v) - mean(U)||^2 / ((1/|U|) sum_{i in U} ||v_i - mean(U)||^2`.
    pub kappa_hat: f64,
    /// Indices of a maximizing subset, of size `s + 1 - b_hat`.
    pub subset: Vec<usize>,
}

/// Mean of the selected vectors, clamped per coordinate to their range so that
/// identical vectors have an exactly zero spread.
fn subset_mean(vs: &[&ModelVector], mask: u32, dim: usize) -> ModelVector {
    let members = || (0..vs.len()).filter(move |i| mask >> i & 1 == 1);
    let size = mask.count_ones() as f64;
    let out = (0..dim)
        .map(|k| {
            let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for i in members() {
                let x = vs[i][k];
                lo = lo.min(x);
                hi = hi.max(x);
                sum += x;
            }
            (sum / size).clamp(lo, hi)
        })
        .collect();
    ModelVector::new(out)
}

fn ratio(output: &ModelVector, vs: &[&ModelVector], mask: u32, dim: usize) -> f64 {
    let centre = subset_mean(vs, mask, dim);
    let numerator = output.dist_sq(&centre);
    let spread = (0..vs.len())
        .filter(|i| mask >> i & 1 == 1)
        .map(|i| vs[i].dist_sq(&centre))
        .sum::<f64>()
        / mask.count_ones() as f64;
    match (numerator == 0.0, spread == 0.0) {
        (true, _) => 0.0,
        (false, true) => f64::INFINITY,
        (false, false) => numerator / spread,
    }
}

/// Measures the robustness constant of `rule` on one instance by enumerating
/// every subset of `s + 1 - b_hat` inputs.
pub fn empirical_kappa(rule: Rule, input: &AggregationInput) -> Result<RobustnessCertificate> {
    let vs = input.all();
    let count = vs.len();
    if count > KAPPA_ENUMERATION_CAP {
        return Err(invalid(format!(
            "kappa enumeration supports at most {KAPPA_ENUMERATION_CAP} inputs, got {count}"
        )));
    }
    let output = aggregate(rule, input)?;
    let dim = output.dim();
    let keep = (count - input.b_hat) as u32;
    let (kappa_hat, mask) = (0u32..1 << count)
        .into_par_iter()
        .filter(|m| m.count_ones() == keep)
        .map(|m| (ratio(&output, &vs, m, dim), m))
        // Larger ratio wins; equal ratios go to the smaller mask for determinism.
        .reduce(
            || (f64::NEG_INFINITY, u32::MAX),
            |a, b| match a.0.total_cmp(&b.0) {
                std::cmp::Ordering::Less => b,
                std::cmp::Ordering::Greater => a,
                std::cmp::Ordering::Equal => {
                    if a.1 <= b.1 {
                        a
                    } else {
                        b
                    }
                }
            },
        );
    Ok(RobustnessCertificate {
        rule,
        s: input.s(),
        b_hat: input.b_hat,
        dim,
        kappa_hat,
        subset: (0..count).filter(|i| mask >> i & 1 == 1).collect(),
    })
}

use rayon::prelude::*;
use serde::Serialize;

use super::bound::reduction_coefficients;
use crate::aggregation::{aggregate_slice, Rule};
use crate::error::{invalid, Result};
use crate::numerics::{mean, mean_squared_deviation, Domain, ModelVector, RngStream};
use crate::sampling::sample_any;

/// Monte-Carlo estimate of one aggregation round's effect on fixed honest models.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaReport {
    pub num_honest: usize,
    pub h_hat: usize,
    pub trials: usize,
    /// `(1/|H|) sum_i ||x_i - mean||^2` of the inputs.
    pub input_variance: f64,
    /// Estimate of `E ||mean(y) - mean(x)||^2`.
    pub drift: f64,
    pub drift_se: f64,
    /// Estimate of `E (1/|H|) sum_i ||y_i - mean(y)||^2`.
    pub variance: f64,
    pub variance_se: f64,
    /// Estimate of `E ||y_i - mean(x)||^2` for a single node.
    pub subsample_variance: f64,
    pub subsample_variance_se: f64,
    /// Coefficients with `kappa = 0`.
    pub lambda: f64,
    pub alpha: f64,
    /// `drift / input_variance`, empty for zero-spread inputs.
    pub drift_ratio: Option<f64>,
    /// `variance / input_variance`, empty for zero-spread inputs.
    pub variance_ratio: Option<f64>,
    /// Whether the drift inequality holds within three standard errors;
    /// only checked for plain averaging without trimming.
    pub drift_bound_ok: Option<bool>,
    pub variance_bound_ok: Option<bool>,
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let k = samples.len() as f64;
    let m = samples.iter().sum::<f64>() / k;
    if samples.len() < 2 {
        return (m, 0.0);
    }
    let var = samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0);
    (m, (var / k).sqrt())
}

/// Repeats one aggregation round `trials` times on fixed honest models.
///
/// Each honest node aggregates a uniform `h_hat`-subset of the honest models
/// with `rule` and trimming parameter `b_hat`. For plain averaging with
/// `b_hat = 0` both reduction inequalities are checked with their exact
/// coefficients.
pub fn verify_reduction_lemma(
    vectors: &[ModelVector],
    h_hat: usize,
    rule: Rule,
    b_hat: usize,
    trials: usize,
    seed: u64,
) -> Result<LemmaReport> {
    let h = vectors.len();
    if h < 2 {
        return Err(invalid("reduction check needs at least two honest models"));
    }
    if h_hat == 0 || h_hat > h {
        return Err(invalid(format!("need 1 <= h_hat <= {h}, got {h_hat}")));
    }
    if trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    let x_bar = mean(vectors)?;
    let input_variance = mean_squared_deviation(vectors)?;

    let per_trial = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = RngStream::for_node_round(seed, Domain::LEMMA, trial, 0);
            let outputs = (0..h)
                .map(|_| {
                    let picked = sample_any(h, h_hat, &mut rng)?;
                    let inputs: Vec<&ModelVector> = picked.iter().map(|&j| &vectors[j]).collect();
                    aggregate_slice(rule, &inputs, b_hat)
                })
                .collect::<Result<Vec<_>>>()?;
            let y_bar = mean(&outputs)?;
            Ok((
                y_bar.dist_sq(&x_bar),
                mean_squared_deviation(&outputs)?,
                outputs[0].dist_sq(&x_bar),
            ))
        })
        .collect::<Result<Vec<(f64, f64, f64)>>>()?;

    let (drift, drift_se) = mean_and_se(&per_trial.iter().map(|r| r.0).collect::<Vec<_>>());
    let (variance, variance_se) = mean_and_se(&per_trial.iter().map(|r| r.1).collect::<Vec<_>>());
    let (subsample_variance, subsample_variance_se) =
        mean_and_se(&per_trial.iter().map(|r| r.2).collect::<Vec<_>>());
    let (lambda, alpha) = reduction_coefficients(h, h_hat, 0.0);
    let checked = rule == Rule::Mean && b_hat == 0;
    let ratio = |x: f64| (input_variance > 0.0).then(|| x / input_variance);
    Ok(LemmaReport {
        num_honest: h,
        h_hat,
        trials,
        input_variance,
        drift,
        drift_se,
        variance,
        variance_se,
        subsample_variance,
        subsample_variance_se,
        lambda,
        alpha,
        drift_ratio: ratio(drift),
        variance_ratio: ratio(variance),
        drift_bound_ok: checked.then_some(drift <= lambda * input_variance + 3.0 * drift_se),
        variance_bound_ok: checked.then_some(variance <= alpha * input_variance + 3.0 * variance_se),
    })
}

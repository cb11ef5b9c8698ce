use serde::Serialize;

use crate::error::{invalid, Result};

/// Problem constants entering the convergence bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundConstants {
    /// Smoothness `L`.
    pub l: f64,
    /// Gradient noise `sigma^2`.
    pub sigma2: f64,
    /// Heterogeneity `G^2`.
    pub g2: f64,
    pub n: usize,
    pub b: usize,
    pub s: usize,
    pub b_hat: usize,
    pub rounds: usize,
    /// `F_H(mean x^0) - F_H*`.
    pub f_gap: f64,
    pub kappa: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundEvaluation {
    /// Bound on `(1/T) sum_t E ||grad F_H(x_i^t)||^2`; infinite when `alpha >= 1`.
    pub value: f64,
    /// Whether `alpha < 1`, i.e. the bound is defined.
    pub defined: bool,
    /// Largest step size allowed by the bound.
    pub eta: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// `(lambda, alpha)` of the reduction for `|H|` honest nodes, `h_hat` honest
/// inputs per aggregation and robustness constant `kappa`.
pub fn reduction_coefficients(num_honest: usize, h_hat: usize, kappa: f64) -> (f64, f64) {
    let h = num_honest as f64;
    let hh = h_hat as f64;
    let base = (h - hh) / ((h - 1.0) * hh);
    (kappa + base / h, 6.0 * kappa + 6.0 * base)
}

/// Evaluates the convergence bound and its step size.
pub fn eval_convergence_bound(k: &BoundConstants) -> Result<BoundEvaluation> {
    if k.b >= k.n || k.n - k.b < 2 {
        return Err(invalid("bound needs at least two honest nodes"));
    }
    if k.b_hat > k.s || k.rounds == 0 {
        return Err(invalid("bound needs b_hat <= s and T >= 1"));
    }
    if [k.l, k.sigma2, k.g2, k.f_gap, k.kappa].iter().any(|v| !(*v >= 0.0 && v.is_finite())) || k.l == 0.0 {
        return Err(invalid("bound constants must be finite, nonnegative, and L > 0"));
    }
    let honest = k.n - k.b;
    let h_hat = (k.s + 1 - k.b_hat).min(honest);
    let (lambda, alpha) = reduction_coefficients(honest, h_hat, k.kappa);
    let l = k.l;
    let t = k.rounds as f64;
    let n = k.n as f64;
    let nh = honest as f64;
    let c0 = 12.0 * k.f_gap;
    if alpha >= 1.0 {
        return Ok(BoundEvaluation {
            value: f64::INFINITY,
            defined: false,
            eta: 0.0,
            alpha,
            lambda,
            c0,
            c1: f64::INFINITY,
            c2: f64::INFINITY,
            c3: f64::INFINITY,
        });
    }
    let c1 = 18.0 * alpha * (1.0 + alpha) / ((1.0 - alpha) * (1.0 - alpha));
    let c2 = 72.0 * l * (3.0 / nh + 2.0 * c1 + 4.5 * lambda * (2.0 * c1 + 3.0));
    let c3 = 6.0 * (6.0 * c1 + 4.5 * lambda * (4.0 * c1 + 9.0));
    let noise = c2 * l * k.sigma2 + 432.0 * l / t * (k.sigma2 / nh);
    let drift = 9.0 * c1 * n * l * l * (k.sigma2 + k.g2);

    let value = 2.0 * (noise * c0 / t).sqrt() + 2.0 * (c0 * c0 * drift / (t * t)).cbrt() + 12.0 * l * c0 / t + c3 * k.g2;
    let eta = [1.0 / (12.0 * l), (c0 / (t * drift)).cbrt(), (c0 / (t * noise)).sqrt()]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(BoundEvaluation {
        value,
        defined: true,
        eta,
        alpha,
        lambda,
        c0,
        c1,
        c2,
        c3,
    })
}

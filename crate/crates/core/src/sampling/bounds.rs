use serde::Serialize;

use crate::error::{invalid, Result};

fn xlogx_over(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * (a / b).ln()
    }
}

/// Bernoulli relative entropy
/// `D(alpha, beta) = alpha ln(alpha/beta) + (1-alpha) ln((1-alpha)/(1-beta))`,
/// with `0 ln 0 = 0`.
pub fn kl_bernoulli(alpha: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("kl_bernoulli needs 0 < beta < 1, got {beta}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("kl_bernoulli needs 0 <= alpha <= 1, got {alpha}")));
    }
    Ok((xlogx_over(alpha, beta) + xlogx_over(1.0 - alpha, 1.0 - beta)).max(0.0))
}

/// Chernoff bound `P(b_i >= b_hat) <= exp(-s D(b_hat/s, b/(n-1)))` for
/// `b_i ~ HG(n-1, b, s)`. Only meaningful when `b_hat/s > b/(n-1)`.
pub fn tail_bound(n: u64, b: u64, s: u64, b_hat: u64) -> Result<f64> {
    if n < 2 || b == 0 || b >= n || s == 0 {
        return Err(invalid("tail_bound needs n >= 2, 0 < b < n, s >= 1"));
    }
    let beta = b as f64 / (n - 1) as f64;
    let alpha = b_hat as f64 / s as f64;
    if alpha <= beta || alpha > 1.0 {
        return Err(invalid("tail_bound needs b/(n-1) < b_hat/s <= 1"));
    }
    Ok((-(s as f64) * kl_bernoulli(alpha, beta)?).exp())
}

/// Outcome of the sufficient-sampling scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SamplingThreshold {
    pub s: u64,
    pub b_hat: u64,
    /// The entropy condition never held below `n - 1`; `s` fell back to
    /// all-to-all sampling where `b_hat = b` holds deterministically.
    pub capped: bool,
}

/// Smallest `s` with
/// `s >= min{n-1, ln(T|H|/(1-p)) / D(b_hat/s, b/(n-1))}` where
/// `b_hat = ceil(fraction * s)`, found by scanning `s` upward.
pub fn threshold_s(
    n: u64,
    b: u64,
    b_hat_over_s: f64,
    rounds: u64,
    num_honest: u64,
    p: f64,
) -> Result<SamplingThreshold> {
    if n < 2 || b >= n {
        return Err(invalid("threshold_s needs n >= 2 and b < n"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("threshold_s needs 0 < p < 1"));
    }
    if !(b_hat_over_s > 0.0 && b_hat_over_s <= 1.0) {
        return Err(invalid("threshold_s needs 0 < b_hat/s <= 1"));
    }
    if rounds == 0 || num_honest == 0 {
        return Err(invalid("threshold_s needs T >= 1 and |H| >= 1"));
    }
    if b == 0 {
        return Ok(SamplingThreshold {
            s: 1,
            b_hat: 0,
            capped: false,
        });
    }
    let beta = b as f64 / (n - 1) as f64;
    let budget = (rounds as f64 * num_honest as f64 / (1.0 - p)).ln();
    for s in 1..n - 1 {
        let b_hat = (b_hat_over_s * s as f64).ceil() as u64;
        let alpha = b_hat as f64 / s as f64;
        if alpha <= beta {
            continue;
        }
        let divergence = kl_bernoulli(alpha.min(1.0), beta)?;
        if divergence > 0.0 && s as f64 >= budget / divergence {
            return Ok(SamplingThreshold {
                s,
                b_hat,
                capped: false,
            });
        }
    }
    Ok(SamplingThreshold {
        s: n - 1,
        b_hat: b,
        capped: true,
    })
}

/// `ceil(max{1/(1/2 - b/n)^2, 3/(b/n)} ln(4T|H|/(1-p))) + 2`.
pub fn log_bound_s(n: u64, b: u64, rounds: u64, num_honest: u64, p: f64) -> Result<u64> {
    if b == 0 {
        return Err(invalid("log_bound_s is undefined for b = 0"));
    }
    if n == 0 || 2 * b >= n {
        return Err(invalid("log_bound_s needs 0 < b/n < 1/2"));
    }
    if !(p > 0.0 && p < 1.0) || rounds == 0 || num_honest == 0 {
        return Err(invalid("log_bound_s needs 0 < p < 1, T >= 1, |H| >= 1"));
    }
    let frac = b as f64 / n as f64;
    let coef = f64::max(1.0 / (0.5 - frac).powi(2), 3.0 / frac);
    let log_term = (4.0 * rounds as f64 * num_honest as f64 / (1.0 - p)).ln();
    Ok((coef * log_term).ceil() as u64 + 2)
}

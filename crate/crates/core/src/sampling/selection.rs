use rayon::prelude::*;
use serde::Serialize;

use super::hypergeometric::{hypergeom_sf, HypergeometricParams, HypergeometricSampler};
use crate::error::{invalid, Result, RpelError};
use crate::numerics::{Domain, RngStream, StreamId};

/// How `b_hat_s` is obtained for each grid value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Maximum over `sims` independent simulations of `(n - b) * T` draws.
    Simulate { sims: usize },
    /// Smallest `k` with `P(max of (n - b) * T draws <= k) >= p`, computed
    /// from the exact CDF.
    Quantile { p: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridEntry {
    pub s: u64,
    pub b_hat: u64,
    /// Effective adversarial fraction `b_hat / (s + 1)`.
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Selection {
    pub s: u64,
    pub b_hat: u64,
    pub kappa: f64,
    pub table: Vec<GridEntry>,
}

fn check_counts(n: u64, b: u64, s: u64, rounds: u64) -> Result<()> {
    if n < 2 || b >= n {
        return Err(invalid("need n >= 2 and b < n"));
    }
    if s == 0 || s > n - 1 {
        return Err(invalid(format!("need 1 <= s <= n - 1, got s = {s}")));
    }
    if rounds == 0 {
        return Err(invalid("need T >= 1"));
    }
    Ok(())
}

/// Maximum number of attackers any honest node pulls over `rounds` rounds,
/// each draw `b_i^t ~ HG(n - 1, b, s)`.
///
/// Honest node `i` owns the stream `(seed, SELECTION, node = i, round = tag)`;
/// the reduction is a max, so the result does not depend on scheduling.
pub fn simulate_max_selected(n: u64, b: u64, s: u64, rounds: u64, seed: u64, tag: u64) -> Result<u64> {
    check_counts(n, b, s, rounds)?;
    let params = HypergeometricParams::new(n - 1, b, s)?;
    let sampler = HypergeometricSampler::new(params);
    let honest = n - b;
    Ok((0..honest)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, Domain::SELECTION, StreamId::new(i, tag));
            (0..rounds).map(|_| sampler.sample(&mut rng)).max().unwrap_or(0)
        })
        .max()
        .unwrap_or(0))
}

/// Exact `p`-quantile of the maximum over `draws` i.i.d. `HG(n-1, b, s)` variables.
pub fn max_quantile(n: u64, b: u64, s: u64, draws: u64, p: f64) -> Result<u64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("quantile level must lie in (0, 1)"));
    }
    let params = HypergeometricParams::new(n - 1, b, s)?;
    let (lo, hi) = params.support();
    for k in lo..hi {
        let tail = hypergeom_sf(params, k);
        // CDF(k)^draws via log1p to stay accurate when the tail is tiny.
        let prob = (draws as f64 * (-tail).ln_1p()).exp();
        if prob >= p {
            return Ok(k);
        }
    }
    Ok(hi)
}

fn stream_tag(s: u64, sim: u64) -> u64 {
    (s << 32) | sim
}

/// Picks the smallest grid `s` whose effective adversarial fraction
/// `b_hat_s / (s + 1)` is at most `q`.
pub fn select_hyperparameters(
    n: u64,
    b: u64,
    rounds: u64,
    grid: &[u64],
    mode: SelectionMode,
    q: f64,
    seed: u64,
) -> Result<Selection> {
    if grid.is_empty() {
        return Err(invalid("grid of s values is empty"));
    }
    if n < 2 || b >= n {
        return Err(invalid("need n >= 2 and b < n"));
    }
    let floor = b as f64 / n as f64;
    if !(q >= floor && q < 0.5) {
        return Err(invalid(format!("need b/n <= q < 1/2, got q = {q}")));
    }
    let mut grid = grid.to_vec();
    grid.sort_unstable();
    grid.dedup();

    let mut table = Vec::with_capacity(grid.len());
    for &s in &grid {
        check_counts(n, b, s, rounds)?;
        let b_hat = match mode {
            SelectionMode::Simulate { sims } => {
                if sims == 0 {
                    return Err(invalid("need at least one simulation"));
                }
                (0..sims as u64)
                    .map(|j| simulate_max_selected(n, b, s, rounds, seed, stream_tag(s, j)))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .max()
                    .unwrap_or(0)
            }
            SelectionMode::Quantile { p } => max_quantile(n, b, s, (n - b) * rounds, p)?,
        };
        table.push(GridEntry {
            s,
            b_hat,
            kappa: b_hat as f64 / (s + 1) as f64,
        });
    }
    match table.iter().find(|e| e.kappa <= q) {
        Some(best) => Ok(Selection {
            s: best.s,
            b_hat: best.b_hat,
            kappa: best.kappa,
            table,
        }),
        None => Err(RpelError::InfeasibleGrid {
            q,
            table: table
                .iter()
                .map(|e| (e.s as usize, e.b_hat as usize, e.kappa))
                .collect(),
        }),
    }
}

/// One row of the effective-fraction simulation output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FracSimRow {
    pub n: u64,
    pub b: u64,
    pub s: u64,
    pub sim_index: u64,
    pub b_hat: u64,
    pub effective_fraction: f64,
}

/// Simulated effective adversarial fraction for every `(n, s)` cell, `sims` rows each.
/// `b = round(byz_frac * n)`.
pub fn effective_fraction_sweep(
    n_list: &[u64],
    byz_frac: f64,
    s_list: &[u64],
    rounds: u64,
    sims: u64,
    seed: u64,
) -> Result<Vec<FracSimRow>> {
    if !(0.0..0.5).contains(&byz_frac) {
        return Err(invalid("byzantine fraction must lie in [0, 1/2)"));
    }
    let mut rows = Vec::new();
    for &n in n_list {
        let b = (byz_frac * n as f64).round() as u64;
        for &s in s_list {
            check_counts(n, b, s, rounds)?;
            for sim in 0..sims {
                let b_hat = simulate_max_selected(n, b, s, rounds, seed ^ n.rotate_left(17), stream_tag(s, sim))?;
                rows.push(FracSimRow {
                    n,
                    b,
                    s,
                    sim_index: sim,
                    b_hat,
                    effective_fraction: b_hat as f64 / (s + 1) as f64,
                });
            }
        }
    }
    Ok(rows)
}

use rand::Rng;

use crate::error::{invalid, Result};

/// `HG(population, successes, draws)`: successes seen when drawing without replacement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HypergeometricParams {
    pub population: u64,
    pub successes: u64,
    pub draws: u64,
}

impl HypergeometricParams {
    pub fn new(population: u64, successes: u64, draws: u64) -> Result<Self> {
        if successes > population || draws > population {
            return Err(invalid(format!(
                "hypergeometric parameters need K <= N and m <= N (N={population}, K={successes}, m={draws})"
            )));
        }
        Ok(Self {
            population,
            successes,
            draws,
        })
    }

    /// Inclusive support `[max(0, m - (N - K)), min(m, K)]`.
    pub fn support(&self) -> (u64, u64) {
        let failures = self.population - self.successes;
        (
            self.draws.saturating_sub(failures),
            self.draws.min(self.successes),
        )
    }

    pub fn mean(&self) -> f64 {
        if self.population == 0 {
            return 0.0;
        }
        self.draws as f64 * self.successes as f64 / self.population as f64
    }
}

/// Exact binomial coefficient, `None` on u128 overflow.
pub fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// The PMF as an exact ratio `(C(K,k) C(N-K,m-k), C(N,m))`, `None` on overflow.
pub fn hypergeom_pmf_exact(params: HypergeometricParams, k: u64) -> Option<(u128, u128)> {
    let HypergeometricParams {
        population: n,
        successes: big_k,
        draws: m,
    } = params;
    let den = binomial_u128(n, m)?;
    if k > m || k > big_k || m - k > n - big_k {
        return Some((0, den));
    }
    let num = binomial_u128(big_k, k)?.checked_mul(binomial_u128(n - big_k, m - k)?)?;
    Some((num, den))
}

/// `C(K,k) C(N-K, m-k) / C(N, m)`; zero outside the support.
pub fn hypergeom_pmf(params: HypergeometricParams, k: u64) -> Result<f64> {
    if k > params.draws {
        return Err(invalid(format!("k = {k} exceeds draws m = {}", params.draws)));
    }
    Ok(pmf_unchecked(params, k))
}

fn pmf_unchecked(params: HypergeometricParams, k: u64) -> f64 {
    let (lo, hi) = params.support();
    if k < lo || k > hi {
        return 0.0;
    }
    if let Some((num, den)) = hypergeom_pmf_exact(params, k) {
        return num as f64 / den as f64;
    }
    pmf_table(params)[(k - lo) as usize]
}

/// The PMF over the whole support `lo..=hi`.
///
/// Uses exact ratios when the binomials fit in `u128`; otherwise walks the
/// term ratio `p(k+1)/p(k)` outward from the mode and normalizes, which keeps
/// the relative error at a few ulps per support point.
fn pmf_table(params: HypergeometricParams) -> Vec<f64> {
    let (lo, hi) = params.support();
    let exact: Option<Vec<f64>> = (lo..=hi)
        .map(|k| hypergeom_pmf_exact(params, k).map(|(num, den)| num as f64 / den as f64))
        .collect();
    if let Some(table) = exact {
        return table;
    }
    let HypergeometricParams {
        population: n,
        successes: big_k,
        draws: m,
    } = params;
    let (nf, kf, mf) = (n as f64, big_k as f64, m as f64);
    // p(k+1)/p(k) = (K-k)(m-k) / ((k+1)(N-K-m+k+1))
    let ratio = |k: f64| (kf - k) * (mf - k) / ((k + 1.0) * (nf - kf - mf + k + 1.0));
    let mode = (((mf + 1.0) * (kf + 1.0) / (nf + 2.0)).floor() as u64).clamp(lo, hi);
    let mut table = vec![0.0; (hi - lo + 1) as usize];
    let at = |k: u64| (k - lo) as usize;
    table[at(mode)] = 1.0;
    for k in mode..hi {
        table[at(k + 1)] = table[at(k)] * ratio(k as f64);
    }
    for k in (lo..mode).rev() {
        table[at(k)] = table[at(k + 1)] / ratio(k as f64);
    }
    let total: f64 = table.iter().sum();
    table.iter_mut().for_each(|p| *p /= total);
    table
}

/// `P(X <= k)`.
pub fn hypergeom_cdf(params: HypergeometricParams, k: u64) -> f64 {
    let (lo, hi) = params.support();
    if k >= hi {
        return 1.0;
    }
    if k < lo {
        return 0.0;
    }
    pmf_table(params)[..=(k - lo) as usize].iter().sum::<f64>().min(1.0)
}

/// `P(X > k)`, summed over the upper tail for accuracy near zero.
pub fn hypergeom_sf(params: HypergeometricParams, k: u64) -> f64 {
    let (lo, hi) = params.support();
    if k >= hi {
        return 0.0;
    }
    let start = k.saturating_add(1).max(lo);
    pmf_table(params)[(start - lo) as usize..].iter().sum::<f64>().min(1.0)
}

/// Largest `draws` for which single samples use sequential urn draws.
pub const URN_DRAW_LIMIT: u64 = 64;

/// Reusable sampler. Small draw counts use exact sequential urn draws; larger
/// ones invert a precomputed CDF table.
#[derive(Clone, Debug)]
pub struct HypergeometricSampler {
    params: HypergeometricParams,
    lo: u64,
    cdf: Option<Vec<f64>>,
}

impl HypergeometricSampler {
    pub fn new(params: HypergeometricParams) -> Self {
        let (lo, hi) = params.support();
        let cdf = (params.draws > URN_DRAW_LIMIT && lo < hi).then(|| {
            let mut acc = 0.0;
            let mut table: Vec<f64> = pmf_table(params)
                .into_iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
            if let Some(last) = table.last_mut() {
                *last = 1.0;
            }
            table
        });
        Self { params, lo, cdf }
    }

    pub fn params(&self) -> HypergeometricParams {
        self.params
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let (lo, hi) = self.params.support();
        if lo == hi {
            return lo;
        }
        match &self.cdf {
            Some(table) => {
                let u: f64 = rng.random();
                let idx = table.partition_point(|&c| c <= u).min(table.len() - 1);
                self.lo + idx as u64
            }
            None => urn_draw(self.params, rng),
        }
    }
}

fn urn_draw<R: Rng + ?Sized>(params: HypergeometricParams, rng: &mut R) -> u64 {
    let mut remaining = params.population;
    let mut good = params.successes;
    let mut hits = 0;
    for drawn in 0..params.draws {
        if good == 0 {
            break;
        }
        if good == remaining {
            hits += params.draws - drawn;
            break;
        }
        if rng.random_range(0..remaining) < good {
            hits += 1;
            good -= 1;
        }
        remaining -= 1;
    }
    hits
}

/// One draw from `HG(N, K, m)`.
pub fn hypergeom_sample<R: Rng + ?Sized>(params: HypergeometricParams, rng: &mut R) -> u64 {
    if params.draws <= URN_DRAW_LIMIT {
        let (lo, hi) = params.support();
        if lo == hi {
            return lo;
        }
        urn_draw(params, rng)
    } else {
        HypergeometricSampler::new(params).sample(rng)
    }
}

use crate::error::{invalid, Result};
use crate::numerics::{common_dim, symmetric_mean, ModelVector};

fn check_trim(count: usize, b_hat: usize) -> Result<()> {
    if 2 * b_hat >= count {
        return Err(invalid(format!(
            "cannot trim {b_hat} values from each side of {count} inputs"
        )));
    }
    Ok(())
}

fn columns<V: AsRef<ModelVector>>(vs: &[V]) -> Result<Vec<Vec<f64>>> {
    let dim = common_dim(vs)?;
    Ok((0..dim)
        .map(|k| {
            let mut column: Vec<f64> = vs.iter().map(|v| v.as_ref()[k]).collect();
            column.sort_by(f64::total_cmp);
            column
        })
        .collect())
}

/// Arithmetic mean of all inputs.
pub fn agg_mean<V: AsRef<ModelVector>>(vs: &[V]) -> Result<ModelVector> {
    symmetric_mean(vs)
}

/// Coordinate-wise trimmed mean: drops the `b_hat` smallest and `b_hat`
/// largest values of every coordinate and averages the rest.
pub fn agg_cwtm<V: AsRef<ModelVector>>(vs: &[V], b_hat: usize) -> Result<ModelVector> {
    check_trim(vs.len(), b_hat)?;
    let out = columns(vs)?
        .into_iter()
        .map(|column| {
            let kept = &column[b_hat..column.len() - b_hat];
            let avg = kept.iter().sum::<f64>() / kept.len() as f64;
            avg.clamp(kept[0], kept[kept.len() - 1])
        })
        .collect();
    Ok(ModelVector::new(out))
}

/// Coordinate-wise median; even counts take the midpoint of the two central values.
pub fn agg_cwmed<V: AsRef<ModelVector>>(vs: &[V]) -> Result<ModelVector> {
    let out = columns(vs)?
        .into_iter()
        .map(|column| {
            let mid = column.len() / 2;
            if column.len() % 2 == 1 {
                column[mid]
            } else {
                0.5 * (column[mid - 1] + column[mid])
            }
        })
        .collect();
    Ok(ModelVector::new(out))
}

/// Indices of the `keep` inputs closest to `vs[center]` (itself included),
/// ties broken by lower index.
fn nearest<V: AsRef<ModelVector>>(vs: &[V], center: usize, keep: usize) -> Vec<usize> {
    let c = vs[center].as_ref();
    let mut order: Vec<(f64, usize)> = vs
        .iter()
        .enumerate()
        .map(|(j, v)| (c.dist_sq(v.as_ref()), j))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.truncate(keep);
    order.into_iter().map(|(_, j)| j).collect()
}

/// Nearest-neighbor mixing: each input is replaced by the mean of its
/// `len - b_hat` nearest inputs (Euclidean, itself included).
pub fn nnm_preaggregate<V: AsRef<ModelVector>>(vs: &[V], b_hat: usize) -> Result<Vec<ModelVector>> {
    common_dim(vs)?;
    if b_hat >= vs.len() {
        return Err(invalid("nnm needs b_hat below the number of inputs"));
    }
    let keep = vs.len() - b_hat;
    (0..vs.len())
        .map(|i| {
            let group: Vec<&ModelVector> = nearest(vs, i, keep)
                .into_iter()
                .map(|j| vs[j].as_ref())
                .collect();
            symmetric_mean(&group)
        })
        .collect()
}

/// NNM followed by the coordinate-wise trimmed mean with the same `b_hat`.
pub fn agg_nnm_cwtm<V: AsRef<ModelVector>>(vs: &[V], b_hat: usize) -> Result<ModelVector> {
    check_trim(vs.len(), b_hat)?;
    agg_cwtm(&nnm_preaggregate(vs, b_hat)?, b_hat)
}

/// Krum: returns the input whose summed squared distance to its
/// `len - b_hat - 2` nearest other inputs is smallest (at least one neighbor).
/// Ties go to the lexicographically smallest input.
pub fn agg_krum<V: AsRef<ModelVector>>(vs: &[V], b_hat: usize) -> Result<ModelVector> {
    common_dim(vs)?;
    let count = vs.len();
    if count == 1 {
        return Ok(vs[0].as_ref().clone());
    }
    let neighbors = count.saturating_sub(b_hat + 2).max(1);
    let mut best: Option<(f64, usize)> = None;
    for i in 0..count {
        let mut dists: Vec<f64> = (0..count)
            .filter(|&j| j != i)
            .map(|j| vs[i].as_ref().dist_sq(vs[j].as_ref()))
            .collect();
        dists.sort_by(f64::total_cmp);
        let score: f64 = dists[..neighbors].iter().sum();
        // Equal scores go to the lexicographically smallest vector, which keeps
        // the output independent of input order.
        let better = best.is_none_or(|(s, j)| match score.total_cmp(&s) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => lex_less(vs[i].as_ref(), vs[j].as_ref()),
        });
        if better {
            best = Some((score, i));
        }
    }
    let (_, winner) = best.expect("at least one input");
    Ok(vs[winner].as_ref().clone())
}

fn lex_less(a: &ModelVector, b: &ModelVector) -> bool {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .is_some_and(|o| o.is_lt())
}

const GEOMED_MAX_ITERS: usize = 10_000;

/// Geometric median by Weiszfeld iterations started at the coordinate-wise median.
pub fn agg_geomed<V: AsRef<ModelVector>>(vs: &[V]) -> Result<ModelVector> {
    let dim = common_dim(vs)?;
    let scale = vs
        .iter()
        .flat_map(|v| v.as_ref().iter())
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1.0);
    let tol = 1e-15 * scale;
    let mut z = agg_cwmed(vs)?;
    for _ in 0..GEOMED_MAX_ITERS {
        let mut num = vec![0.0; dim];
        let mut pull = vec![0.0; dim];
        let mut den = 0.0;
        let mut coincident = 0usize;
        for v in vs {
            let v = v.as_ref();
            let dist = z.dist_sq(v).sqrt();
            if dist <= tol {
                coincident += 1;
                continue;
            }
            den += 1.0 / dist;
            for ((acc, p), (x, zk)) in num.iter_mut().zip(pull.iter_mut()).zip(v.iter().zip(z.iter())) {
                *acc += x / dist;
                *p += (x - zk) / dist;
            }
        }
        if den == 0.0 {
            break;
        }
        // At a data point, the estimate is optimal when the unit pull of the
        // remaining points does not exceed the point's multiplicity.
        if coincident > 0 && pull.iter().map(|p| p * p).sum::<f64>().sqrt() <= coincident as f64 {
            break;
        }
        let next = ModelVector::new(num.into_iter().map(|x| x / den).collect());
        let step = next.dist_sq(&z).sqrt();
        z = next;
        if step <= tol {
            break;
        }
    }
    Ok(z)
}

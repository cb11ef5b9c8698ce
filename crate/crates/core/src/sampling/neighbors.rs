use rand::seq::index;
use rand::Rng;

use crate::error::{invalid, Result};

/// Uniform `s`-subset of `{0..n} \ {self_id}`, returned in ascending order.
pub fn sample_neighbors<R: Rng + ?Sized>(
    n: usize,
    s: usize,
    self_id: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if self_id >= n {
        return Err(invalid(format!("self id {self_id} out of range for n = {n}")));
    }
    if s == 0 || s > n - 1 {
        return Err(invalid(format!("need 1 <= s <= n - 1, got s = {s}, n = {n}")));
    }
    let mut picked: Vec<usize> = index::sample(rng, n - 1, s)
        .into_iter()
        .map(|j| if j >= self_id { j + 1 } else { j })
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Uniform `size`-subset of all `n` nodes, self not excluded.
pub fn sample_any<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Result<Vec<usize>> {
    if size == 0 || size > n {
        return Err(invalid(format!("need 1 <= size <= n, got size = {size}, n = {n}")));
    }
    let mut picked = index::sample(rng, n, size).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Domain, RngStream};

    #[test]
    fn exhaustive_and_exclusion() {
        let mut rng = RngStream::for_node_round(0, Domain::SAMPLING, 0, 0);
        assert_eq!(sample_neighbors(5, 4, 2, &mut rng).unwrap(), vec![0, 1, 3, 4]);
        for self_id in 0..7 {
            for _ in 0..200 {
                let picked = sample_neighbors(7, 3, self_id, &mut rng).unwrap();
                assert_eq!(picked.len(), 3);
                assert!(!picked.contains(&self_id));
                assert!(picked.windows(2).all(|w| w[0] < w[1]));
            }
        }
        assert!(sample_neighbors(5, 5, 0, &mut rng).is_err());
        assert!(sample_neighbors(5, 0, 0, &mut rng).is_err());
    }

    #[test]
    fn inclusion_probability_is_uniform() {
        let mut rng = RngStream::for_node_round(3, Domain::SAMPLING, 0, 0);
        let draws = 100_000;
        let mut hits = [0usize; 5];
        for _ in 0..draws {
            for j in sample_neighbors(5, 2, 0, &mut rng).unwrap() {
                hits[j] += 1;
            }
        }
        assert_eq!(hits[0], 0);
        for &h in &hits[1..] {
            assert!((h as f64 / draws as f64 - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn sample_any_may_include_self() {
        let mut rng = RngStream::for_node_round(4, Domain::SAMPLING, 0, 0);
        let includes_zero = (0..1000)
            .filter(|_| sample_any(6, 3, &mut rng).unwrap().contains(&0))
            .count();
        assert!(includes_zero > 400 && includes_zero < 600);
    }
}

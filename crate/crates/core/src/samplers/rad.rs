use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use crate::error::{invalid, Result};
use crate::geometry::sample_interior;
use crate::network::FieldModel;
use crate::pde::PdeProblem;
use crate::rng::{derive_seed, seeded};
use crate::scalar::Real;

/// `ε^k / mean(ε^k) + c`; uniform when every residual is zero.
pub fn rad_weights<T: Real>(residual_abs: ArrayView1<T>, k_exp: T, c: T) -> Result<Array1<T>> {
    if residual_abs.is_empty() {
        return Err(invalid("empty residual vector"));
    }
    if residual_abs.iter().any(|r| !r.is_finite() || *r < T::zero()) {
        return Err(invalid("residuals must be finite and nonnegative"));
    }
    let powered = residual_abs.mapv(|r| r.powf(k_exp));
    let mean = powered.mean().expect("nonempty");
    if !(mean > T::zero()) || !mean.is_finite() {
        return Ok(Array1::from_elem(residual_abs.len(), T::one()));
    }
    Ok(powered.mapv(|p| p / mean + c))
}

/// `n` distinct indices drawn with probability proportional to `weights`
/// (successive sampling), using exponential keys `ln(u) / w` and keeping the
/// `n` largest. Zero weights are drawn only after every positive weight.
pub fn weighted_sample_without_replacement<T: Real>(weights: ArrayView1<T>, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > weights.len() {
        return Err(invalid(format!("cannot draw {n} from {} items", weights.len())));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
        return Err(invalid("weights must be finite and nonnegative"));
    }
    let mut rng = seeded(seed);
    let mut keys: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
            let w = w.to_f64_lossy();
            let key = if w > 0.0 { u.ln() / w } else { f64::NEG_INFINITY };
            (key, i)
        })
        .collect();
    let desc = |a: &(f64, usize), b: &(f64, usize)| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
    if n > 0 && n < keys.len() {
        keys.select_nth_unstable_by(n - 1, desc);
    }
    keys.truncate(n);
    keys.sort_by(desc);
    Ok(keys.into_iter().map(|(_, i)| i).collect())
}

/// Draws a uniform pool of `pool_size` points, weights them by residual and
/// keeps `n` of them. The whole pool is evaluated in one batch.
pub fn rad_update<T: Real, M: FieldModel<T> + ?Sized>(
    model: &M,
    problem: &PdeProblem<T>,
    n: usize,
    pool_size: usize,
    k_exp: T,
    c: T,
    seed: u64,
) -> Result<Array2<T>> {
    if pool_size < n {
        return Err(invalid(format!("pool size {pool_size} is smaller than sample size {n}")));
    }
    let pool = sample_interior(problem.domain(), pool_size, derive_seed(seed, 0))?;
    let residual = problem.residual(model, pool.view())?.mapv(|r| r.abs());
    let weights = rad_weights(residual.view(), k_exp, c)?;
    let picked = weighted_sample_without_replacement(weights.view(), n, derive_seed(seed, 1))?;
    Ok(pool.select(Axis(0), &picked))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn weights_formula() {
        let w = rad_weights(array![1.0, 3.0].view(), 1.0, 1.0).unwrap();
        assert_eq!(w, array![1.5, 2.5]);
        let w = rad_weights(array![0.0, 0.0, 0.0].view(), 1.0, 1.0).unwrap();
        assert_eq!(w, array![1.0, 1.0, 1.0]);
        let w = rad_weights(array![1.0, 2.0].view(), 2.0, 0.0).unwrap();
        assert_eq!(w, array![0.4, 1.6]);
    }

    #[test]
    fn distinct_indices() {
        let w = Array1::from_iter((0..100).map(|i| 1.0 + i as f64));
        let mut picked = weighted_sample_without_replacement(w.view(), 60, 4).unwrap();
        picked.sort();
        picked.dedup();
        assert_eq!(picked.len(), 60);
        assert!(weighted_sample_without_replacement(w.view(), 101, 4).is_err());
    }

    #[test]
    fn zero_weights_last() {
        let w = array![0.0, 1.0, 0.0, 2.0];
        let mut picked = weighted_sample_without_replacement(w.view(), 2, 0).unwrap();
        picked.sort();
        assert_eq!(picked, vec![1, 3]);
    }

    #[test]
    fn heavy_item_frequency() {
        let w = array![3.0, 1.0, 1.0, 1.0];
        let trials = 10_000;
        let hits = (0..trials)
            .filter(|&t| weighted_sample_without_replacement(w.view(), 1, t as u64).unwrap()[0] == 0)
            .count();
        let freq = hits as f64 / trials as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn pool_smaller_than_n() {
        let p = PdeProblem::<f64>::burgers();
        let net = crate::network::Mlp::init(p.net_config(), 0).unwrap();
        assert!(rad_update(&net, &p, 100, 50, 1.0, 1.0, 0).is_err());
        let out = rad_update(&net, &p, 50, 200, 1.0, 1.0, 0).unwrap();
        assert_eq!(out.nrows(), 50);
    }
}

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::knn::knn_table;
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::scalar::Real;

/// Synthetic points with the draws that produced them, for replay checks.
#[derive(Debug, Clone)]
pub struct SmoteDraws<T> {
    pub points: Array2<T>,
    pub parents: Vec<usize>,
    pub neighbors: Vec<usize>,
    pub alphas: Vec<T>,
}

/// `x + α(y - x)`, clamped coordinatewise to the segment's bounding box so
/// rounding can never push a point past either endpoint.
pub fn interpolate<T: Real>(x: ArrayView1<T>, y: ArrayView1<T>, alpha: T) -> Array1<T> {
    x.iter()
        .zip(y.iter())
        .map(|(&a, &b)| {
            let v = a + alpha * (b - a);
            v.max(a.min(b)).min(a.max(b))
        })
        .collect()
}

/// `target_count - n₁` synthetic points from `n₁` positives.
pub fn smote_oversample<T: Real>(positives: ArrayView2<T>, target_count: usize, k: usize, seed: u64) -> Result<Array2<T>> {
    Ok(smote_traced(positives, target_count, k, seed)?.points)
}

pub fn smote_traced<T: Real>(positives: ArrayView2<T>, target_count: usize, k: usize, seed: u64) -> Result<SmoteDraws<T>> {
    smote_traced_with(positives, target_count, k, seed, &mut |rng| T::lit(rng.gen::<f64>()))
}

/// SMOTE with a caller-supplied interpolation weight, drawn after the parent
/// and neighbor of each sample. Parents are uniform over the positives and
/// neighbors uniform over the parent's `min(k, n₁-1)` nearest positives.
pub fn smote_traced_with<T: Real>(
    positives: ArrayView2<T>,
    target_count: usize,
    k: usize,
    seed: u64,
    alpha: &mut dyn FnMut(&mut ChaCha8Rng) -> T,
) -> Result<SmoteDraws<T>> {
    let n1 = positives.nrows();
    if n1 < 2 {
        return Err(Error::CannotOversample(format!("{n1} positive point(s), need at least 2")));
    }
    if target_count <= n1 {
        return Err(crate::error::invalid(format!("target count {target_count} must exceed positive count {n1}")));
    }
    if k == 0 {
        return Err(crate::error::invalid("k must be at least 1"));
    }
    let table = knn_table(positives, k.min(n1 - 1))?;
    let count = target_count - n1;
    let mut rng = seeded(seed);
    let mut out = Array2::<T>::zeros((count, positives.ncols()));
    let mut parents = Vec::with_capacity(count);
    let mut neighbors = Vec::with_capacity(count);
    let mut alphas = Vec::with_capacity(count);
    for mut row in out.rows_mut() {
        let i = rng.gen_range(0..n1);
        let j = table[i][rng.gen_range(0..table[i].len())];
        let a = alpha(&mut rng);
        row.assign(&interpolate(positives.row(i), positives.row(j), a));
        parents.push(i);
        neighbors.push(j);
        alphas.push(a);
    }
    Ok(SmoteDraws { points: out, parents, neighbors, alphas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn alpha_endpoints() {
        let pos = array![[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]];
        let zero = smote_traced_with(pos.view(), 10, 2, 3, &mut |_| 0.0).unwrap();
        for (r, &p) in zero.points.rows().into_iter().zip(&zero.parents) {
            assert_eq!(r, pos.row(p));
        }
        let one = smote_traced_with(pos.view(), 10, 2, 3, &mut |_| 1.0).unwrap();
        for (r, &q) in one.points.rows().into_iter().zip(&one.neighbors) {
            assert_eq!(r, pos.row(q));
        }
    }

    #[test]
    fn two_parents_stay_on_segment() {
        let pos = array![[0.0, 0.0], [1.0, 0.0]];
        let out = smote_oversample(pos.view(), 50, 1, 9).unwrap();
        assert_eq!(out.nrows(), 48);
        for r in out.rows() {
            assert_eq!(r[1], 0.0);
            assert!((0.0..=1.0).contains(&r[0]));
        }
    }

    #[test]
    fn k_larger_than_class_is_capped() {
        let pos = array![[0.0], [1.0], [2.0]];
        let d = smote_traced(pos.view(), 20, 5, 0).unwrap();
        assert!(d.parents.iter().zip(&d.neighbors).all(|(p, q)| p != q));
    }

    #[test]
    fn errors() {
        let one = array![[0.0, 0.0]];
        assert!(matches!(smote_oversample(one.view(), 5, 1, 0), Err(Error::CannotOversample(_))));
        let two = array![[0.0], [1.0]];
        assert!(smote_oversample(two.view(), 2, 1, 0).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let pos = array![[0.1, 0.2], [0.4, 0.9], [0.5, 0.5], [0.8, 0.3]];
        let a = smote_oversample(pos.view(), 30, 2, 11).unwrap();
        let b = smote_oversample(pos.view(), 30, 2, 11).unwrap();
        assert_eq!(a, b);
    }
}

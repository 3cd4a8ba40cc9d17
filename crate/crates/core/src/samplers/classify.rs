use ndarray::{Array1, Array2, Axis};

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Collocation points with absolute residuals and binary labels: label 1 for
/// the top `floor(λ·n)` residuals, 0 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSampleSet<T> {
    pub points: Array2<T>,
    pub residuals: Array1<T>,
    pub labels: Vec<bool>,
    pub lambda: T,
}

impl<T: Real> LabeledSampleSet<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|l| **l).count()
    }

    pub fn positive_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i]).collect()
    }

    /// Positive rows, in original index order.
    pub fn positives(&self) -> Array2<T> {
        self.points.select(Axis(0), &self.positive_indices())
    }
}

/// Number of positives for `n` points at ratio `lambda`.
pub fn positive_count<T: Real>(n: usize, lambda: T) -> usize {
    // guard against λ·n landing a hair under an integer, e.g. 0.15·20
    let prod = lambda.to_f64_lossy() * n as f64;
    (prod * (1.0 + 1e-12)).floor() as usize
}

/// Labels the top `floor(λ·n)` residuals as positive. Ties keep original order,
/// so among equal residuals the lowest indices become positive.
pub fn classify_residuals<T: Real>(points: Array2<T>, residuals: Array1<T>, lambda: T) -> Result<LabeledSampleSet<T>> {
    let n = residuals.len();
    if points.nrows() != n {
        return Err(invalid(format!("{} points but {} residuals", points.nrows(), n)));
    }
    if n < 2 {
        return Err(invalid("classification needs at least two points"));
    }
    if !(lambda > T::zero() && lambda < T::lit(0.5)) {
        return Err(invalid(format!("lambda must lie in (0, 0.5), got {lambda}")));
    }
    if residuals.iter().any(|r| !r.is_finite() || *r < T::zero()) {
        return Err(invalid("residuals must be finite and nonnegative"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort, descending residual
    order.sort_by(|&a, &b| residuals[b].partial_cmp(&residuals[a]).expect("finite residuals"));
    let mut labels = vec![false; n];
    for &i in order.iter().take(positive_count(n, lambda)) {
        labels[i] = true;
    }
    Ok(LabeledSampleSet { points, residuals, labels, lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels_of(res: Vec<f64>, lambda: f64) -> Vec<bool> {
        let n = res.len();
        classify_residuals(Array2::zeros((n, 1)), Array1::from(res), lambda).unwrap().labels
    }

    #[test]
    fn descending_residuals() {
        assert_eq!(labels_of(vec![5.0, 4.0, 3.0, 2.0, 1.0], 0.4), vec![true, true, false, false, false]);
        assert_eq!(labels_of(vec![1.0, 5.0, 2.0, 4.0, 3.0], 0.4), vec![false, true, false, true, false]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(labels_of(vec![1.0; 5], 0.4), vec![true, true, false, false, false]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let pts = Array2::<f64>::zeros((3, 1));
        assert!(classify_residuals(pts.clone(), Array1::from(vec![1.0, 2.0, 3.0]), 0.5).is_err());
        assert!(classify_residuals(pts.clone(), Array1::from(vec![1.0, 2.0, 3.0]), 0.0).is_err());
        assert!(classify_residuals(pts.clone(), Array1::from(vec![1.0, -2.0, 3.0]), 0.3).is_err());
        assert!(classify_residuals(Array2::zeros((1, 1)), Array1::from(vec![1.0]), 0.3).is_err());
    }

    #[test]
    fn exact_counts_for_decimal_ratios() {
        for (n, lambda, want) in [(2000, 0.45, 900), (2000, 0.15, 300), (20, 0.15, 3), (10000, 0.35, 3500), (5, 0.4, 2)] {
            assert_eq!(positive_count(n, lambda), want, "n={n} λ={lambda}");
        }
    }

    proptest! {
        #[test]
        fn positives_dominate_negatives(res in proptest::collection::vec(0.0f64..10.0, 2..200), lambda in 0.01f64..0.49) {
            let n = res.len();
            let set = classify_residuals(Array2::zeros((n, 1)), Array1::from(res.clone()), lambda).unwrap();
            prop_assert_eq!(set.n_positive(), (lambda * n as f64).floor() as usize);
            let min_pos = (0..n).filter(|&i| set.labels[i]).map(|i| res[i]).fold(f64::INFINITY, f64::min);
            let max_neg = (0..n).filter(|&i| !set.labels[i]).map(|i| res[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(set.n_positive() == 0 || min_pos >= max_neg);
        }
    }
}

use std::cmp::Ordering;

use ndarray::{ArrayView1, ArrayView2};

use crate::error::{invalid, Result};
use crate::scalar::Real;

fn sq_dist<T: Real>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.iter().zip(b.iter()).map(|(x, y)| (*x - *y) * (*x - *y)).sum()
}

fn by_distance_then_index<T: Real>(a: &(T, usize), b: &(T, usize)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// The `k` nearest rows to row `query` (Euclidean), excluding `query` itself,
/// ordered by distance with ties broken by index.
pub fn knn<T: Real>(points: ArrayView2<T>, query: usize, k: usize) -> Result<Vec<usize>> {
    let n = points.nrows();
    if query >= n {
        return Err(invalid(format!("query index {query} out of range for {n} points")));
    }
    if k == 0 || k >= n {
        return Err(invalid(format!("k must satisfy 1 <= k < n, got k={k}, n={n}")));
    }
    let q = points.row(query);
    let mut cand: Vec<(T, usize)> =
        (0..n).filter(|&j| j != query).map(|j| (sq_dist(q, points.row(j)), j)).collect();
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, by_distance_then_index);
        cand.truncate(k);
    }
    cand.sort_by(by_distance_then_index);
    Ok(cand.into_iter().map(|(_, j)| j).collect())
}

/// Neighbor lists for every row, computed by exhaustive search.
pub fn knn_table<T: Real>(points: ArrayView2<T>, k: usize) -> Result<Vec<Vec<usize>>> {
    (0..points.nrows()).map(|i| knn(points, i, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn line_example() {
        let pts = array![[0.0], [1.0], [2.0], [10.0]];
        assert_eq!(knn(pts.view(), 0, 2).unwrap(), vec![1, 2]);
        assert_eq!(knn(pts.view(), 3, 1).unwrap(), vec![2]);
    }

    #[test]
    fn duplicate_comes_first() {
        let pts = array![[0.5, 0.5], [0.0, 0.0], [0.5, 0.5], [0.6, 0.5]];
        assert_eq!(knn(pts.view(), 0, 2).unwrap(), vec![2, 3]);
    }

    #[test]
    fn equal_distances_by_index() {
        let pts = array![[0.0], [1.0], [-1.0], [2.0]];
        assert_eq!(knn(pts.view(), 0, 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn k_too_large() {
        let pts = array![[0.0], [1.0]];
        assert!(knn(pts.view(), 0, 2).is_err());
        assert!(knn(pts.view(), 0, 0).is_err());
    }
}

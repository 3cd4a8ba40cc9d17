//! Error metrics, held-out evaluation, memory probing and seed aggregation.

mod memory;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::sample_interior;
use crate::network::FieldModel;
use crate::oracles::reference_values;
use crate::pde::{PdeProblem, Reference};
use crate::scalar::Real;
use crate::trainer::TrainRecord;

pub use memory::{current_bytes, peak_memory_probe, peak_since, reset_peak, tracking_active, TrackingAllocator};

/// Evaluation seed, fixed independently of any training seed.
pub const TEST_SEED: u64 = 0;

/// `‖pred - reference‖₂ / ‖reference‖₂`.
pub fn l2_relative_error<T: Real>(pred: ArrayView1<T>, reference: ArrayView1<T>) -> Result<T> {
    if pred.len() != reference.len() {
        return Err(invalid(format!("lengths differ: {} vs {}", pred.len(), reference.len())));
    }
    let den = reference.dot(&reference).sqrt();
    if !(den > T::zero()) {
        return Err(invalid("reference has zero norm"));
    }
    let num = pred.iter().zip(reference.iter()).map(|(p, r)| (*p - *r) * (*p - *r)).sum::<T>().sqrt();
    Ok(num / den)
}

/// 20000 test points for the two-coordinate problems, 100000 for `d ≥ 10`.
pub fn default_test_points<T: Real>(problem: &PdeProblem<T>) -> usize {
    if problem.spatial_dim() >= 10 {
        100_000
    } else {
        20_000
    }
}

/// A fixed test set with reference values, built once per run.
#[derive(Debug, Clone)]
pub struct Evaluator<T> {
    points: Array2<T>,
    reference: Array1<f64>,
}

impl<T: Real> Evaluator<T> {
    /// Uniform points over the problem domain (time included) and their
    /// exact or oracle reference values.
    pub fn new(problem: &PdeProblem<T>, n_test: usize, seed: u64) -> Result<Self> {
        let points = sample_interior(problem.domain(), n_test, seed)?;
        let reference = match problem.reference() {
            Reference::Exact(f) => points.rows().into_iter().map(|r| f.eval(&r.to_vec()).to_f64_lossy()).collect(),
            Reference::Oracle(solver) => {
                let x: Vec<f64> = points.column(0).iter().map(|v| v.to_f64_lossy()).collect();
                let t: Vec<f64> = points.column(1).iter().map(|v| v.to_f64_lossy()).collect();
                Array1::from(reference_values(solver, &x, &t)?)
            }
        };
        Ok(Self { points, reference })
    }

    /// The default-size test set with [`TEST_SEED`].
    pub fn for_problem(problem: &PdeProblem<T>) -> Result<Self> {
        Self::new(problem, default_test_points(problem), TEST_SEED)
    }

    pub fn points(&self) -> &Array2<T> {
        &self.points
    }

    pub fn reference(&self) -> &Array1<f64> {
        &self.reference
    }

    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }

    /// L2 relative error of `model` on the test set, in `f64`.
    pub fn error<M: FieldModel<T> + ?Sized>(&self, model: &M) -> Result<f64> {
        let pred = model.values(self.points.view())?.mapv(|v| v.to_f64_lossy());
        l2_relative_error(pred.view(), self.reference.view())
    }
}

pub fn evaluate_on_test_set<T: Real, M: FieldModel<T> + ?Sized>(
    problem: &PdeProblem<T>,
    model: &M,
    n_test: usize,
    seed: u64,
) -> Result<f64> {
    Evaluator::new(problem, n_test, seed)?.error(model)
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(invalid("no values to aggregate"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub problem: String,
    pub sampler: String,
    pub n_interior: usize,
    pub mean_error: f64,
    pub std_error: f64,
    /// Maximum over seeds; `None` when no run could measure memory.
    pub peak_memory_bytes: Option<u64>,
    pub n_seeds: usize,
}

/// Mean and sample std of final-iteration errors across seeds; peak memory is
/// the maximum across seeds.
pub fn aggregate_seeds(
    problem: &str,
    sampler: &str,
    n_interior: usize,
    runs: &[Vec<TrainRecord>],
) -> Result<ExperimentSummary> {
    let finals: Vec<&TrainRecord> =
        runs.iter().map(|r| r.last().ok_or_else(|| invalid("run without records"))).collect::<Result<_>>()?;
    let errors: Vec<f64> = finals.iter().map(|r| r.l2_rel_err).collect();
    let (mean_error, std_error) = mean_std(&errors)?;
    let peak_memory_bytes = runs.iter().flat_map(|r| r.iter().filter_map(|rec| rec.peak_mem_bytes)).max();
    Ok(ExperimentSummary {
        problem: problem.into(),
        sampler: sampler.into(),
        n_interior,
        mean_error,
        std_error,
        peak_memory_bytes,
        n_seeds: runs.len(),
    })
}

/// Counting bound behind residual imbalance: if `Σ|r_i| < ε` then fewer than
/// `ε/τ` residuals reach `τ`.
pub fn imbalance_bound_check(residuals: ArrayView1<f64>, epsilon: f64, tau: f64) -> Result<bool> {
    let total: f64 = residuals.iter().map(|r| r.abs()).sum();
    if !(total < epsilon) {
        return Err(invalid(format!("residual sum {total} is not below epsilon {epsilon}")));
    }
    if !(tau > 0.0 && tau < epsilon) {
        return Err(invalid(format!("tau must lie in (0, {epsilon}), got {tau}")));
    }
    let large = residuals.iter().filter(|r| r.abs() >= tau).count();
    Ok((large as f64) < epsilon / tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Mlp, MlpConfig};
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn l2_examples() {
        let u: Array1<f64> = array![1.0, -2.0, 3.0];
        assert_eq!(l2_relative_error(u.view(), u.view()).unwrap(), 0.0);
        assert!((l2_relative_error((&u * 2.0).view(), u.view()).unwrap() - 1.0).abs() < 1e-15);
        let norm = u.dot(&u).sqrt();
        let shifted = &u + &array![norm, 0.0, 0.0];
        assert!((l2_relative_error(shifted.view(), u.view()).unwrap() - 1.0).abs() < 1e-15);
        assert!(l2_relative_error(u.view(), array![0.0, 0.0, 0.0].view()).is_err());
        assert!(l2_relative_error(u.view(), array![1.0].view()).is_err());
    }

    proptest! {
        #[test]
        fn l2_scale_invariant(v in proptest::collection::vec(-5.0f64..5.0, 1..40), c in 0.1f64..10.0, seed in 0u64..1000) {
            let u = Array1::from(v);
            prop_assume!(u.dot(&u) > 1e-6);
            let p = u.mapv(|x| x + ((seed as f64 + x) * 1.7).sin());
            let a = l2_relative_error(p.view(), u.view()).unwrap();
            let b = l2_relative_error((&p * -c).view(), (&u * -c).view()).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        }

        #[test]
        fn imbalance_bound_holds(v in proptest::collection::vec(0.0f64..1.0, 1..100), frac in 0.001f64..0.999) {
            let r = Array1::from(v);
            let eps = r.sum() * 1.01 + 1e-9;
            prop_assert!(imbalance_bound_check(r.view(), eps, frac * eps).unwrap());
        }
    }

    #[test]
    fn imbalance_examples() {
        let r = Array1::from_elem(9, 0.1);
        assert!(imbalance_bound_check(r.view(), 1.0, 0.1).unwrap());
        assert!(imbalance_bound_check(Array1::zeros(5).view(), 1.0, 0.5).unwrap());
        assert!(imbalance_bound_check(r.view(), 0.5, 0.1).is_err());
        assert!(imbalance_bound_check(r.view(), 1.0, 1.5).is_err());
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[1.0, 2.0, 3.0]).unwrap(), (2.0, 1.0));
        assert_eq!(mean_std(&[0.7]).unwrap(), (0.7, 0.0));
        assert_eq!(mean_std(&[0.3; 4]).unwrap().1, 0.0);
        assert!(mean_std(&[]).is_err());
    }

    #[test]
    fn exact_wrapper_scores_zero() {
        let p = PdeProblem::<f64>::laplace();
        let f = p.exact_solution().unwrap();
        let e = evaluate_on_test_set(&p, &f, 2000, 0).unwrap();
        assert!(e < 1e-10);
    }

    #[test]
    fn zero_network_scores_one() {
        let p = PdeProblem::<f64>::elliptic(10).unwrap();
        let zero = Mlp::<f64>::zeros(p.net_config()).unwrap();
        let e = evaluate_on_test_set(&p, &zero, 20_000, 0).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let p = PdeProblem::<f64>::reaction_diffusion(3).unwrap();
        let net = Mlp::<f64>::init(MlpConfig::new(4, 3, 6).unwrap(), 3).unwrap();
        let a = evaluate_on_test_set(&p, &net, 500, 0).unwrap();
        let b = evaluate_on_test_set(&p, &net, 500, 0).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

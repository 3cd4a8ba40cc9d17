//! Collocation-set update strategies.
//!
//! * [`rsmote_update`]: label the top `λ` fraction of points by residual,
//!   SMOTE-oversample them to parity with the rest, keep the enlarged positive
//!   class and top up with fresh uniform points.
//! * [`rad_update`]: resample from a large uniform pool with probability
//!   proportional to a power of the residual.
//! * [`uniform_update`]: plain uniform resampling.
//!
//! Every update returns exactly as many points as it is asked for.

mod classify;
mod knn;
mod rad;
mod smote;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{sample_interior, Domain};
use crate::rng::derive_seed;
use crate::scalar::Real;

pub use classify::{classify_residuals, positive_count, LabeledSampleSet};
pub use knn::{knn, knn_table};
pub use rad::{rad_update, rad_weights, weighted_sample_without_replacement};
pub use smote::{interpolate, smote_oversample, smote_traced, smote_traced_with, SmoteDraws};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMethod {
    Rsmote,
    Rad,
    Uniform,
}

fn default_lambda() -> f64 {
    0.45
}
fn default_knn_k() -> usize {
    5
}
fn default_rad_pool() -> usize {
    50_000
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub method: SamplerMethod,
    /// Fraction of points labeled positive, in `(0, 0.5)`.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
    /// Size of the uniform pool RAD estimates its density on.
    #[serde(default = "default_rad_pool")]
    pub rad_pool: usize,
    #[serde(default = "one")]
    pub rad_k_exp: f64,
    #[serde(default = "one")]
    pub rad_c: f64,
}

impl SamplerConfig {
    pub fn rsmote(lambda: f64) -> Self {
        Self { method: SamplerMethod::Rsmote, lambda, ..Self::uniform() }
    }

    pub fn rad(pool: usize) -> Self {
        Self { method: SamplerMethod::Rad, rad_pool: pool, ..Self::uniform() }
    }

    pub fn uniform() -> Self {
        Self {
            method: SamplerMethod::Uniform,
            lambda: default_lambda(),
            knn_k: default_knn_k(),
            rad_pool: default_rad_pool(),
            rad_k_exp: 1.0,
            rad_c: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 0.5) {
            return Err(invalid(format!("lambda must lie in (0, 0.5), got {}", self.lambda)));
        }
        if self.knn_k == 0 {
            return Err(invalid("knn_k must be at least 1"));
        }
        if self.method == SamplerMethod::Rad {
            if self.rad_pool == 0 {
                return Err(invalid("rad_pool must be at least 1"));
            }
            if !(self.rad_k_exp >= 0.0 && self.rad_c >= 0.0) {
                return Err(invalid("rad_k_exp and rad_c must be nonnegative"));
            }
        }
        Ok(())
    }

    /// Short method label as used in result tables, e.g. `RSmote`, `RAD-50000`.
    pub fn label(&self) -> String {
        match self.method {
            SamplerMethod::Rsmote if self.lambda == default_lambda() => "RSmote".into(),
            SamplerMethod::Rsmote => format!("RSmote-l{}", self.lambda),
            SamplerMethod::Rad => format!("RAD-{}", self.rad_pool),
            SamplerMethod::Uniform => "Uniform".into(),
        }
    }
}

/// Fresh uniform interior points.
pub fn uniform_update<T: Real>(domain: &Domain<T>, n: usize, seed: u64) -> Result<Array2<T>> {
    sample_interior(domain, n, seed)
}

/// Positives, their SMOTE synthetics and `n₁` fresh uniform points:
/// `n₁ + (n₂ - n₁) + n₁ = n` rows in total.
pub fn rsmote_update<T: Real>(
    current: &LabeledSampleSet<T>,
    domain: &Domain<T>,
    config: &SamplerConfig,
    seed: u64,
) -> Result<Array2<T>> {
    let n = current.len();
    let positives = current.positives();
    let n1 = positives.nrows();
    let n2 = n - n1;
    let synthetic = smote_oversample(positives.view(), n2, config.knn_k, derive_seed(seed, 0))?;
    let fresh = sample_interior(domain, n1, derive_seed(seed, 1))?;
    Ok(concatenate![Axis(0), positives, synthetic, fresh])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use ndarray::Array1;
    use rand::Rng;

    #[test]
    fn rsmote_counts() {
        let dom = Domain::<f64>::hypercube(2, -1.0, 1.0).unwrap();
        let pts = sample_interior(&dom, 2000, 0).unwrap();
        let mut rng = crate::rng::seeded(1);
        let res: Array1<f64> = (0..2000).map(|_| rng.gen::<f64>()).collect();
        let labeled = classify_residuals(pts, res, 0.45).unwrap();
        assert_eq!(labeled.n_positive(), 900);
        let cfg = SamplerConfig::rsmote(0.45);
        let out = rsmote_update(&labeled, &dom, &cfg, 7).unwrap();
        assert_eq!(out.nrows(), 2000);
        // first 1100 rows are positive-region points, last 900 uniform
        assert_eq!(out.slice(ndarray::s![0..900, ..]), labeled.positives());
        assert!(out.rows().into_iter().all(|r| dom.contains(r.as_slice().unwrap())));
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::rsmote(0.5).validate().is_err());
        assert!(SamplerConfig::rsmote(0.0).validate().is_err());
        assert!(SamplerConfig::rsmote(0.45).validate().is_ok());
        let mut c = SamplerConfig::rad(0);
        assert!(c.validate().is_err());
        c.rad_pool = 10;
        assert!(c.validate().is_ok());
        assert_eq!(SamplerConfig::rad(50_000).label(), "RAD-50000");
        assert_eq!(SamplerConfig::rsmote(0.15).label(), "RSmote-l0.15");
    }

    #[test]
    fn too_few_positives_cannot_oversample() {
        let dom = Domain::<f64>::hypercube(1, 0.0, 1.0).unwrap();
        let pts = sample_interior(&dom, 4, 0).unwrap();
        let labeled = classify_residuals(pts, Array1::from(vec![4.0, 3.0, 2.0, 1.0]), 0.3).unwrap();
        assert_eq!(labeled.n_positive(), 1);
        let err = rsmote_update(&labeled, &dom, &SamplerConfig::rsmote(0.3), 0).unwrap_err();
        assert!(matches!(err, crate::Error::CannotOversample(_)));
    }
}

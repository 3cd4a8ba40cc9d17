//! Physics-informed neural network solver with residual-driven SMOTE
//! collocation resampling (RSmote), the RAD and uniform baselines, and the
//! reference solvers used to score the benchmarks.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the double-precision instantiation used by the benchmarks.

pub mod dual;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod network;
pub mod oracles;
pub mod pde;
pub mod rng;
pub mod samplers;
pub mod scalar;
pub mod trainer;
mod storage;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Domain64 = geometry::Domain<f64>;
pub type Mlp64 = network::Mlp<f64>;
pub type Problem64 = pde::PdeProblem<f64>;
pub type BoundarySet64 = pde::BoundarySet<f64>;
pub type Evaluator64 = metrics::Evaluator<f64>;
pub type TrainOutcome64 = trainer::TrainOutcome<f64>;
pub type Mlp32 = network::Mlp<f32>;
pub type Problem32 = pde::PdeProblem<f32>;

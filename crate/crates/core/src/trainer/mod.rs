//! The training loop: alternate Adam and L-BFGS on the current collocation
//! set, then let the sampler move the interior points, for a fixed number of
//! sampling iterations.
//!
//! The boundary set is drawn once per run. Optimizer state does not survive a
//! collocation update. Everything is seeded from [`TrainSchedule::seed`], so a
//! run is reproducible bit for bit.

mod optim;
mod records;

use std::time::Instant;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::sample_interior;
use crate::metrics::{peak_since, reset_peak, Evaluator};
use crate::network::{loss_and_param_gradient, LossParts, Mlp, MlpConfig};
use crate::pde::{BoundarySet, PdeProblem};
use crate::rng::derive_seed;
use crate::samplers::{
    classify_residuals, positive_count, rad_update, rsmote_update, uniform_update, SamplerConfig, SamplerMethod,
};
use crate::scalar::Real;

pub use optim::{
    adam_phase, lbfgs_phase, LbfgsOutcome, LbfgsStop, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, LBFGS_GRAD_TOL, LBFGS_HISTORY,
    WOLFE_C1, WOLFE_C2,
};
pub use records::{read_records_csv, write_records_csv, RecordWriter, RECORD_COLUMNS};

fn default_adam_steps() -> usize {
    1000
}
fn default_lbfgs_steps() -> usize {
    1000
}
fn default_sampling_iters() -> usize {
    100
}
fn default_lr() -> f64 {
    1e-3
}
fn default_gamma() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    #[serde(default = "default_adam_steps")]
    pub adam_steps_per_iter: usize,
    #[serde(default = "default_lbfgs_steps")]
    pub lbfgs_steps_per_iter: usize,
    #[serde(default = "default_sampling_iters")]
    pub sampling_iters: usize,
    #[serde(default = "default_lr")]
    pub adam_lr: f64,
    /// Boundary loss weight.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub n_interior: usize,
    /// Defaults to `max(200, n_interior / 10)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_boundary: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl TrainSchedule {
    /// Default schedule for `n_interior` points.
    pub fn new(n_interior: usize, seed: u64) -> Self {
        Self {
            adam_steps_per_iter: default_adam_steps(),
            lbfgs_steps_per_iter: default_lbfgs_steps(),
            sampling_iters: default_sampling_iters(),
            adam_lr: default_lr(),
            gamma: default_gamma(),
            n_interior,
            n_boundary: None,
            seed,
        }
    }

    /// Same schedule with smaller per-iteration budgets.
    pub fn shortened(mut self, sampling_iters: usize, adam: usize, lbfgs: usize) -> Self {
        self.sampling_iters = sampling_iters;
        self.adam_steps_per_iter = adam;
        self.lbfgs_steps_per_iter = lbfgs;
        self
    }

    pub fn boundary_count(&self) -> usize {
        self.n_boundary.unwrap_or_else(|| (self.n_interior / 10).max(200))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sampling_iters == 0 || self.n_interior == 0 || self.boundary_count() == 0 {
            return Err(invalid("sampling_iters, n_interior and n_boundary must be at least 1"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid(format!("gamma must be finite and nonnegative, got {}", self.gamma)));
        }
        if !(self.adam_lr >= 0.0 && self.adam_lr.is_finite()) {
            return Err(invalid(format!("adam_lr must be finite and nonnegative, got {}", self.adam_lr)));
        }
        Ok(())
    }
}

/// Per-iteration diagnostics that do not go into the records CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordFlags {
    pub lbfgs_stop: Option<LbfgsStop>,
    pub lbfgs_steps: usize,
    /// Total loss entering and leaving the L-BFGS phase.
    pub lbfgs_loss_before: f64,
    pub lbfgs_loss_after: f64,
    /// The sampler could not oversample and uniform points were used instead.
    pub sampler_fallback: bool,
    /// Positives labeled by RSmote on this iteration.
    pub n_positive: Option<usize>,
}

impl RecordFlags {
    pub fn lbfgs_failed(&self) -> bool {
        self.lbfgs_stop == Some(LbfgsStop::LineSearchFailed)
    }
}

/// One row per sampling iteration, measured after training on that
/// iteration's point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iter: usize,
    pub l2_rel_err: f64,
    pub interior_loss: f64,
    pub boundary_loss: f64,
    pub n_points: usize,
    /// Heap high-water mark since the run started; `None` without a probe.
    pub peak_mem_bytes: Option<u64>,
    pub wall_s: f64,
    #[serde(default)]
    pub flags: RecordFlags,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub net: Mlp<T>,
    pub records: Vec<TrainRecord>,
    /// Diagnostic when the run stopped on a numeric failure.
    pub aborted: Option<String>,
}

/// [`run_algorithm1_with`] using the default test set and no record callback.
pub fn run_algorithm1<T: Real>(
    problem: &PdeProblem<T>,
    net_config: MlpConfig,
    sampler: &SamplerConfig,
    schedule: &TrainSchedule,
) -> Result<TrainOutcome<T>> {
    let evaluator = Evaluator::for_problem(problem)?;
    run_algorithm1_with(problem, net_config, sampler, schedule, &evaluator, &mut |_| Ok(()))
}

struct RunState<'a, T> {
    problem: &'a PdeProblem<T>,
    boundary: BoundarySet<T>,
    interior: Array2<T>,
    gamma: T,
}

impl<T: Real> RunState<'_, T> {
    fn loss(&self, net: &Mlp<T>) -> Result<(LossParts<T>, Array1<T>)> {
        loss_and_param_gradient(self.problem, net, self.interior.view(), &self.boundary, self.gamma)
    }
}

/// Runs the sampling loop, calling `on_record` after each iteration. A
/// numeric failure ends the run early with [`TrainOutcome::aborted`] set and
/// the records gathered so far.
pub fn run_algorithm1_with<T: Real>(
    problem: &PdeProblem<T>,
    net_config: MlpConfig,
    sampler: &SamplerConfig,
    schedule: &TrainSchedule,
    evaluator: &Evaluator<T>,
    on_record: &mut dyn FnMut(&TrainRecord) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    schedule.validate()?;
    sampler.validate()?;
    net_config.validate()?;
    if net_config.input_dim != problem.domain().coord_dim() {
        return Err(invalid(format!(
            "network takes {} inputs but {} has {} coordinates",
            net_config.input_dim,
            problem.label(),
            problem.domain().coord_dim()
        )));
    }
    let start = Instant::now();
    let mem_base = reset_peak().ok();
    let seed = schedule.seed;
    let n = schedule.n_interior;
    let lr = T::lit(schedule.adam_lr);

    let mut net = Mlp::<T>::init(net_config, derive_seed(seed, 0))?;
    let mut state = RunState {
        problem,
        interior: sample_interior(problem.domain(), n, derive_seed(seed, 1))?,
        boundary: problem.sample_boundary_set(schedule.boundary_count(), derive_seed(seed, 2))?,
        gamma: T::lit(schedule.gamma),
    };
    let mut records = Vec::with_capacity(schedule.sampling_iters);

    for it in 0..schedule.sampling_iters {
        let mut flags = RecordFlags::default();
        let step = train_iteration(&state, &mut net, schedule, lr, &mut flags);
        let parts = match step {
            Ok(parts) => parts,
            Err(Error::NumericFailure(msg)) => {
                return Ok(TrainOutcome { net, records, aborted: Some(format!("iteration {it}: {msg}")) });
            }
            Err(e) => return Err(e),
        };
        let l2_rel_err = evaluator.error(&net)?;

        if it + 1 < schedule.sampling_iters {
            let iter_seed = derive_seed(seed, 100 + it as u64);
            state.interior = update_interior(&state, &net, sampler, iter_seed, &mut flags)?;
            if state.interior.nrows() != n {
                return Err(Error::NumericFailure(format!("sampler returned {} points, expected {n}", state.interior.nrows())));
            }
        }

        let record = TrainRecord {
            iter: it,
            l2_rel_err,
            interior_loss: parts.interior.to_f64_lossy(),
            boundary_loss: parts.boundary.to_f64_lossy(),
            n_points: n,
            peak_mem_bytes: mem_base.and_then(|b| peak_since(b).ok()),
            wall_s: start.elapsed().as_secs_f64(),
            flags,
        };
        on_record(&record)?;
        records.push(record);
    }
    Ok(TrainOutcome { net, records, aborted: None })
}

/// Adam then L-BFGS on the current point set; returns the final loss parts.
fn train_iteration<T: Real>(
    state: &RunState<'_, T>,
    net: &mut Mlp<T>,
    schedule: &TrainSchedule,
    lr: T,
    flags: &mut RecordFlags,
) -> Result<LossParts<T>> {
    let mut closure = |p: &Array1<T>| -> Result<(T, Array1<T>)> {
        let (parts, grad) = state.loss(&net.with_params(p))?;
        Ok((parts.total, grad))
    };
    let params = adam_phase(net.params().clone(), &mut closure, schedule.adam_steps_per_iter, lr)?;
    let out = lbfgs_phase(params, &mut closure, schedule.lbfgs_steps_per_iter)?;
    flags.lbfgs_stop = Some(out.stop);
    flags.lbfgs_steps = out.steps;
    flags.lbfgs_loss_before = out.initial_loss.to_f64_lossy();
    flags.lbfgs_loss_after = out.loss.to_f64_lossy();
    net.set_params(&out.params);
    let (parts, _) = state.loss(net)?;
    Ok(parts)
}

fn update_interior<T: Real>(
    state: &RunState<'_, T>,
    net: &Mlp<T>,
    sampler: &SamplerConfig,
    seed: u64,
    flags: &mut RecordFlags,
) -> Result<Array2<T>> {
    let problem = state.problem;
    let n = state.interior.nrows();
    match sampler.method {
        SamplerMethod::Uniform => uniform_update(problem.domain(), n, seed),
        SamplerMethod::Rad => rad_update(
            net,
            problem,
            n,
            sampler.rad_pool,
            T::lit(sampler.rad_k_exp),
            T::lit(sampler.rad_c),
            seed,
        ),
        SamplerMethod::Rsmote => {
            let residuals = problem.residual(net, state.interior.view())?.mapv(|r| r.abs());
            let lambda = T::lit(sampler.lambda);
            let labeled = classify_residuals(state.interior.clone(), residuals, lambda)?;
            let n_pos = labeled.n_positive();
            if n_pos != positive_count(n, lambda) {
                return Err(Error::NumericFailure(format!("labeled {n_pos} positives out of {n}")));
            }
            flags.n_positive = Some(n_pos);
            match rsmote_update(&labeled, problem.domain(), sampler, seed) {
                Err(Error::CannotOversample(_)) => {
                    flags.sampler_fallback = true;
                    uniform_update(problem.domain(), n, seed)
                }
                other => other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(problem: &PdeProblem<f64>, sampler: SamplerConfig, iters: usize) -> TrainOutcome<f64> {
        let schedule = TrainSchedule { n_boundary: Some(40), ..TrainSchedule::new(60, 3).shortened(iters, 5, 5) };
        let ev = Evaluator::new(problem, 200, 0).unwrap();
        let cfg = MlpConfig::new(problem.domain().coord_dim(), 2, 8).unwrap();
        run_algorithm1_with(problem, cfg, &sampler, &schedule, &ev, &mut |_| Ok(())).unwrap()
    }

    #[test]
    fn one_uniform_iteration() {
        let p = PdeProblem::<f64>::laplace();
        let out = tiny(&p, SamplerConfig::uniform(), 1);
        assert_eq!(out.records.len(), 1);
        assert!(out.aborted.is_none());
    }

    #[test]
    fn rsmote_records_positive_counts_and_sizes() {
        let p = PdeProblem::<f64>::reaction_diffusion(2).unwrap();
        let out = tiny(&p, SamplerConfig::rsmote(0.45), 3);
        assert_eq!(out.records.len(), 3);
        for r in &out.records[..2] {
            assert_eq!(r.flags.n_positive, Some(27));
            assert_eq!(r.n_points, 60);
        }
        assert_eq!(out.records[2].flags.n_positive, None);
        for r in &out.records {
            assert!(r.flags.lbfgs_loss_after <= r.flags.lbfgs_loss_before || r.flags.lbfgs_failed());
        }
    }

    #[test]
    fn deterministic() {
        let p = PdeProblem::<f64>::elliptic(3).unwrap();
        let a = tiny(&p, SamplerConfig::rad(200), 2);
        let b = tiny(&p, SamplerConfig::rad(200), 2);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.l2_rel_err.to_bits(), y.l2_rel_err.to_bits());
            assert_eq!(x.interior_loss.to_bits(), y.interior_loss.to_bits());
        }
        assert_eq!(a.net.params(), b.net.params());
    }

    #[test]
    fn schedule_defaults_and_validation() {
        let s = TrainSchedule::new(2000, 0);
        assert_eq!(s.boundary_count(), 200);
        assert_eq!(TrainSchedule::new(10_000, 0).boundary_count(), 1000);
        assert!(TrainSchedule { gamma: -1.0, ..s.clone() }.validate().is_err());
        assert!(TrainSchedule { sampling_iters: 0, ..s }.validate().is_err());
    }
}

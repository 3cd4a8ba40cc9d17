//! Full-batch Adam and L-BFGS with a strong-Wolfe line search.
//!
//! Both optimizers take a closure returning `(loss, gradient)` at a parameter
//! vector. Optimizer state lives only for the duration of one phase call.

use std::collections::VecDeque;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

pub const LBFGS_HISTORY: usize = 50;
pub const WOLFE_C1: f64 = 1e-4;
pub const WOLFE_C2: f64 = 0.9;
pub const LBFGS_GRAD_TOL: f64 = 1e-9;
const TOLERANCE_CHANGE: f64 = 1e-12;
const MAX_LINE_SEARCH: usize = 25;

fn check_finite<T: Real>(what: &str, loss: T, grad: &Array1<T>) -> Result<()> {
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericFailure(format!("non-finite {what} (loss {loss})")));
    }
    Ok(())
}

/// `steps` Adam updates from `params`.
pub fn adam_phase<T: Real, F>(mut params: Array1<T>, loss: &mut F, steps: usize, lr: T) -> Result<Array1<T>>
where
    F: FnMut(&Array1<T>) -> Result<(T, Array1<T>)>,
{
    if !(lr >= T::zero()) {
        return Err(invalid(format!("learning rate must be nonnegative, got {lr}")));
    }
    let (b1, b2, eps) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2), T::lit(ADAM_EPS));
    let mut m = Array1::<T>::zeros(params.len());
    let mut v = Array1::<T>::zeros(params.len());
    let (mut b1t, mut b2t) = (T::one(), T::one());
    for step in 0..steps {
        let (f, g) = loss(&params)?;
        check_finite(&format!("Adam step {step}"), f, &g)?;
        b1t *= b1;
        b2t *= b2;
        let c1 = T::one() - b1t;
        let c2 = (T::one() - b2t).sqrt();
        for i in 0..params.len() {
            m[i] = b1 * m[i] + (T::one() - b1) * g[i];
            v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
            params[i] -= lr * (m[i] / c1) / (v[i].sqrt() / c2 + eps);
        }
    }
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LbfgsStop {
    /// Step budget exhausted.
    MaxSteps,
    /// Gradient norm below [`LBFGS_GRAD_TOL`].
    Converged,
    /// Step or loss change below machine-level tolerance.
    NoProgress,
    /// Line search produced a non-finite loss or no admissible step.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome<T> {
    /// Best parameters seen, never worse than the starting point.
    pub params: Array1<T>,
    pub loss: T,
    pub initial_loss: T,
    pub steps: usize,
    pub evaluations: usize,
    pub stop: LbfgsStop,
}

impl<T> LbfgsOutcome<T> {
    pub fn failed(&self) -> bool {
        self.stop == LbfgsStop::LineSearchFailed
    }
}

fn dot<T: Real>(a: &Array1<T>, b: &Array1<T>) -> T {
    a.dot(b)
}

fn max_abs<T: Real>(a: &Array1<T>) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// Minimizer of the cubic through two points with slopes, clamped to `bounds`.
fn cubic_interpolate<T: Real>(x1: T, f1: T, g1: T, x2: T, f2: T, g2: T, bounds: Option<(T, T)>) -> T {
    let (lo, hi) = bounds.unwrap_or(if x1 <= x2 { (x1, x2) } else { (x2, x1) });
    let three = T::lit(3.0);
    let two = T::lit(2.0);
    let d1 = g1 + g2 - three * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= T::zero() {
        let d2 = d2_sq.sqrt();
        let min_pos = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + two * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + two * d2))
        };
        if min_pos.is_finite() {
            return min_pos.max(lo).min(hi);
        }
    }
    (lo + hi) / two
}

struct Trial<T> {
    t: T,
    f: T,
    g: Array1<T>,
    gtd: T,
}

impl<T: Real> Clone for Trial<T> {
    fn clone(&self) -> Self {
        Trial { t: self.t, f: self.f, g: self.g.clone(), gtd: self.gtd }
    }
}

/// Strong-Wolfe bracketing and zoom. Returns the accepted trial and the number
/// of function evaluations. The result is the start point itself when no
/// better point was found.
fn strong_wolfe<T: Real, F>(
    obj: &mut F,
    x: &Array1<T>,
    d: &Array1<T>,
    t0: T,
    f: T,
    g: &Array1<T>,
    gtd: T,
) -> Result<(Trial<T>, usize)>
where
    F: FnMut(&Array1<T>) -> Result<(T, Array1<T>)>,
{
    let (c1, c2) = (T::lit(WOLFE_C1), T::lit(WOLFE_C2));
    let tol = T::lit(TOLERANCE_CHANGE);
    let d_norm = max_abs(d);
    let mut evals = 0;
    // a non-finite trial counts as an infinitely bad point, which makes the
    // zoom bisect back toward the last finite one
    let mut eval = |t: T| -> Result<Trial<T>> {
        let xt = x + &(d * t);
        let (ft, gt) = obj(&xt)?;
        if !ft.is_finite() || gt.iter().any(|v| !v.is_finite()) {
            return Ok(Trial { t, f: T::infinity(), g: Array1::zeros(d.len()), gtd: T::nan() });
        }
        let gtd_t = dot(&gt, d);
        Ok(Trial { t, f: ft, g: gt, gtd: gtd_t })
    };

    let start = Trial { t: T::zero(), f, g: g.clone(), gtd };
    let mut prev = start.clone();
    evals += 1;
    let mut cur = eval(t0)?;
    let mut ls_iter = 0;
    let mut bracket: Vec<Trial<T>>;
    let mut done = false;
    loop {
        if ls_iter >= MAX_LINE_SEARCH {
            bracket = vec![start.clone(), cur.clone()];
            break;
        }
        if cur.f > f + c1 * cur.t * gtd || (ls_iter > 1 && cur.f >= prev.f) {
            bracket = vec![prev.clone(), cur.clone()];
            break;
        }
        if cur.gtd.abs() <= -c2 * gtd {
            bracket = vec![cur.clone()];
            done = true;
            break;
        }
        if cur.gtd >= T::zero() {
            bracket = vec![prev.clone(), cur.clone()];
            break;
        }
        let min_step = cur.t + T::lit(0.01) * (cur.t - prev.t);
        let max_step = cur.t * T::lit(10.0);
        let t_new = cubic_interpolate(prev.t, prev.f, prev.gtd, cur.t, cur.f, cur.gtd, Some((min_step, max_step)));
        evals += 1;
        let next = eval(t_new)?;
        prev = std::mem::replace(&mut cur, next);
        ls_iter += 1;
    }

    if done {
        return Ok((bracket.pop().expect("one trial"), evals));
    }

    // zoom
    let mut insuf_progress = false;
    let (mut low, mut high) = if bracket[0].f <= bracket[1].f { (0, 1) } else { (1, 0) };
    while ls_iter < MAX_LINE_SEARCH {
        if (bracket[1].t - bracket[0].t).abs() * d_norm < tol {
            break;
        }
        let mut t = cubic_interpolate(
            bracket[0].t,
            bracket[0].f,
            bracket[0].gtd,
            bracket[1].t,
            bracket[1].f,
            bracket[1].gtd,
            None,
        );
        let bmax = bracket[0].t.max(bracket[1].t);
        let bmin = bracket[0].t.min(bracket[1].t);
        let eps = T::lit(0.1) * (bmax - bmin);
        if (bmax - t).min(t - bmin) < eps {
            if insuf_progress || t >= bmax || t <= bmin {
                t = if (t - bmax).abs() < (t - bmin).abs() { bmax - eps } else { bmin + eps };
                insuf_progress = false;
            } else {
                insuf_progress = true;
            }
        } else {
            insuf_progress = false;
        }
        evals += 1;
        let trial = eval(t)?;
        ls_iter += 1;
        if trial.f > f + c1 * trial.t * gtd || trial.f >= bracket[low].f {
            bracket[high] = trial;
            (low, high) = if bracket[0].f <= bracket[1].f { (0, 1) } else { (1, 0) };
        } else {
            let wolfe = trial.gtd.abs() <= -c2 * gtd;
            if !wolfe && trial.gtd * (bracket[high].t - bracket[low].t) >= T::zero() {
                bracket[high] = bracket[low].clone();
            }
            bracket[low] = trial;
            if wolfe {
                break;
            }
        }
    }
    Ok((bracket.swap_remove(low), evals))
}

/// Up to `steps` L-BFGS iterations with history [`LBFGS_HISTORY`] and a
/// strong-Wolfe line search. A non-finite starting loss is an error; later
/// failures end the phase and the best parameters seen are returned.
pub fn lbfgs_phase<T: Real, F>(params: Array1<T>, loss: &mut F, steps: usize) -> Result<LbfgsOutcome<T>>
where
    F: FnMut(&Array1<T>) -> Result<(T, Array1<T>)>,
{
    let (mut f, mut g) = loss(&params)?;
    check_finite("L-BFGS start", f, &g)?;
    let initial_loss = f;
    let mut x = params;
    let mut best = (f, x.clone());
    let mut evaluations = 1;
    let grad_tol = T::lit(LBFGS_GRAD_TOL);
    let tol = T::lit(TOLERANCE_CHANGE);

    let mut history: VecDeque<(Array1<T>, Array1<T>, T)> = VecDeque::with_capacity(LBFGS_HISTORY);
    let mut h_diag = T::one();
    let mut prev: Option<(Array1<T>, Array1<T>)> = None; // (previous gradient, last step)
    let mut stop = LbfgsStop::MaxSteps;
    let mut taken = 0;

    let grad_norm = |g: &Array1<T>| dot(g, g).sqrt();
    if grad_norm(&g) < grad_tol {
        stop = LbfgsStop::Converged;
    }

    while stop == LbfgsStop::MaxSteps && taken < steps {
        if let Some((g_old, s)) = prev.take() {
            let y = &g - &g_old;
            let ys = dot(&y, &s);
            if ys > T::lit(1e-10) {
                if history.len() == LBFGS_HISTORY {
                    history.pop_front();
                }
                h_diag = ys / dot(&y, &y);
                history.push_back((s, y, T::one() / ys));
            }
        }
        // two-loop recursion
        let mut q = g.mapv(|v| -v);
        let mut alphas = vec![T::zero(); history.len()];
        for (i, (s, y, rho)) in history.iter().enumerate().rev() {
            alphas[i] = dot(s, &q) * *rho;
            q.scaled_add(-alphas[i], y);
        }
        let mut d = q * h_diag;
        for (i, (s, y, rho)) in history.iter().enumerate() {
            let beta = dot(y, &d) * *rho;
            d.scaled_add(alphas[i] - beta, s);
        }

        let gtd = dot(&g, &d);
        if gtd > -tol {
            stop = LbfgsStop::NoProgress;
            break;
        }
        let t0 = if taken == 0 {
            let l1 = g.iter().fold(T::zero(), |a, v| a + v.abs());
            T::one().min(T::one() / l1)
        } else {
            T::one()
        };
        let (trial, evals) = strong_wolfe(loss, &x, &d, t0, f, &g, gtd)?;
        evaluations += evals;
        taken += 1;
        if !(trial.f <= f) || !trial.f.is_finite() || trial.t <= T::zero() {
            stop = LbfgsStop::LineSearchFailed;
            break;
        }
        let step = &d * trial.t;
        x += &step;
        let f_old = f;
        f = trial.f;
        let g_old = std::mem::replace(&mut g, trial.g);
        if f < best.0 {
            best = (f, x.clone());
        }
        if grad_norm(&g) < grad_tol {
            stop = LbfgsStop::Converged;
        } else if max_abs(&step) <= tol || (f_old - f).abs() < tol * T::one().max(f.abs()) {
            stop = LbfgsStop::NoProgress;
        }
        prev = Some((g_old, step));
    }

    Ok(LbfgsOutcome { params: best.1, loss: best.0, initial_loss, steps: taken, evaluations, stop })
}

//! Burgers reference from the Cole-Hopf integral representation
//!
//! ```text
//! u(x,t) = -∫ sin(π(x-η)) f(x-η) G(η) dη / ∫ f(x-η) G(η) dη
//! f(y) = exp(-cos(πy) / (2πν)),   G(η) = exp(-η² / (4νt))
//! ```
//!
//! evaluated with composite Gauss-Legendre panels on `|η| ≤ 12√(4νt)` and
//! exponents shifted by their maximum so nothing overflows.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::pde::BURGERS_NU;

const PANEL_ORDER: usize = 8;
const START_PANELS: usize = 16;
const MAX_PANELS: usize = 1 << 14;
/// Convergence criterion on successive node doublings.
pub const QUADRATURE_TOL: f64 = 1e-8;
const HALF_WIDTH_SIGMAS: f64 = 12.0;

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`,
/// `n ≥ 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_ORDER))
}

fn cole_hopf_with(x: f64, t: f64, panels: usize, log_terms: &mut Vec<(f64, f64, f64)>) -> f64 {
    let nu = BURGERS_NU;
    let (gx, gw) = panel_rule();
    let half = HALF_WIDTH_SIGMAS * (4.0 * nu * t).sqrt();
    let h = 2.0 * half / panels as f64;
    log_terms.clear();
    let mut max_log = f64::NEG_INFINITY;
    for p in 0..panels {
        let mid = -half + (p as f64 + 0.5) * h;
        for (&xi, &wi) in gx.iter().zip(gw) {
            let eta = mid + 0.5 * h * xi;
            let y = x - eta;
            let log = -(PI * y).cos() / (2.0 * PI * nu) - eta * eta / (4.0 * nu * t);
            max_log = max_log.max(log);
            log_terms.push((log, 0.5 * h * wi, (PI * y).sin()));
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(log, w, s) in log_terms.iter() {
        let e = w * (log - max_log).exp();
        num += s * e;
        den += e;
    }
    -num / den
}

/// Exact Burgers solution at one point; the initial condition at `t = 0`.
pub fn burgers_point(x: f64, t: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&t) {
        return Err(Error::Oracle(format!("Burgers query ({x}, {t}) outside [-1,1]×[0,1]")));
    }
    if t == 0.0 {
        return Ok(-(PI * x).sin());
    }
    let mut scratch = Vec::new();
    let mut panels = START_PANELS;
    let mut prev = cole_hopf_with(x, t, panels, &mut scratch);
    while panels < MAX_PANELS {
        panels *= 2;
        let next = cole_hopf_with(x, t, panels, &mut scratch);
        if (next - prev).abs() <= QUADRATURE_TOL * (1.0 + next.abs()) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Oracle(format!("Cole-Hopf quadrature did not converge at ({x}, {t})")))
}

/// Pointwise Burgers reference at `(x_i, t_i)` pairs.
pub fn burgers_reference(x: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    if x.len() != t.len() {
        return Err(Error::Oracle(format!("{} x values but {} t values", x.len(), t.len())));
    }
    x.iter().zip(t).map(|(&x, &t)| burgers_point(x, t)).collect()
}

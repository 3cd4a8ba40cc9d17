//! Method of lines on a uniform grid over `[-1, 1]` with Dirichlet ends.
//!
//! Space: fourth-order central differences, with one-sided fourth-order
//! stencils at the nodes next to the boundary. Time: Alexander's three-stage
//! L-stable SDIRK, each stage solved by Newton with a banded LU.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::pde::{ALLEN_CAHN_DIFFUSION, ALLEN_CAHN_REACTION, BURGERS_NU};

/// Banded matrix with `kl` sub- and `ku` super-diagonals, row-major band storage.
#[derive(Debug, Clone)]
pub struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![0.0; n * (kl + ku + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku, "({i},{j}) outside band");
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn clear(&mut self) {
        self.data.fill(0.0);
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// In-place LU without pivoting; fill-in stays inside the band.
    pub fn factor(&mut self) -> Result<()> {
        let n = self.n;
        for k in 0..n {
            let pivot = self.get(k, k);
            if !pivot.is_finite() || pivot.abs() < 1e-300 {
                return Err(Error::Oracle(format!("zero pivot at row {k}")));
            }
            let jmax = (k + self.ku).min(n - 1);
            for i in k + 1..=(k + self.kl).min(n - 1) {
                let l = self.get(i, k) / pivot;
                let ik = self.idx(i, k);
                self.data[ik] = l;
                for j in k + 1..=jmax {
                    let v = self.get(k, j);
                    self.add(i, j, -l * v);
                }
            }
        }
        Ok(())
    }

    /// Solves with the factors from [`Banded::factor`].
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let lo = i.saturating_sub(self.kl);
            let s: f64 = (lo..i).map(|j| self.get(i, j) * b[j]).sum();
            b[i] -= s;
        }
        for i in (0..n).rev() {
            let hi = (i + self.ku).min(n - 1);
            let s: f64 = (i + 1..=hi).map(|j| self.get(i, j) * b[j]).sum();
            b[i] = (b[i] - s) / self.get(i, i);
        }
    }
}

/// Finite-difference rows for the interior nodes `1..N` of a grid with `N`
/// intervals; each entry is `(node, coefficient)` over all `N + 1` nodes.
#[derive(Debug, Clone)]
pub struct Stencils {
    pub intervals: usize,
    pub dx: f64,
    pub d1: Vec<Vec<(usize, f64)>>,
    pub d2: Vec<Vec<(usize, f64)>>,
}

impl Stencils {
    pub fn new(intervals: usize) -> Result<Self> {
        if intervals < 8 {
            return Err(Error::Oracle(format!("grid needs at least 8 intervals, got {intervals}")));
        }
        let n = intervals;
        let dx = 2.0 / n as f64;
        let (c1, c2) = (1.0 / (12.0 * dx), 1.0 / (12.0 * dx * dx));
        let mut d1 = Vec::with_capacity(n - 1);
        let mut d2 = Vec::with_capacity(n - 1);
        for i in 1..n {
            let (r1, r2): (Vec<(usize, f64)>, Vec<(usize, f64)>) = if i == 1 {
                (
                    [-3.0, -10.0, 18.0, -6.0, 1.0].iter().enumerate().map(|(k, c)| (k, c * c1)).collect(),
                    [10.0, -15.0, -4.0, 14.0, -6.0, 1.0].iter().enumerate().map(|(k, c)| (k, c * c2)).collect(),
                )
            } else if i == n - 1 {
                (
                    [-3.0, -10.0, 18.0, -6.0, 1.0].iter().enumerate().map(|(k, c)| (n - k, -c * c1)).collect(),
                    [10.0, -15.0, -4.0, 14.0, -6.0, 1.0].iter().enumerate().map(|(k, c)| (n - k, c * c2)).collect(),
                )
            } else {
                (
                    [1.0, -8.0, 0.0, 8.0, -1.0].iter().enumerate().map(|(k, c)| (i + k - 2, c * c1)).collect(),
                    [-1.0, 16.0, -30.0, 16.0, -1.0].iter().enumerate().map(|(k, c)| (i + k - 2, c * c2)).collect(),
                )
            };
            d1.push(r1);
            d2.push(r2);
        }
        Ok(Self { intervals, dx, d1, d2 })
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.intervals).map(|i| -1.0 + i as f64 * self.dx).collect()
    }

    fn apply(rows: &[Vec<(usize, f64)>], u: &[f64], k: usize) -> f64 {
        rows[k].iter().map(|&(j, c)| c * u[j]).sum()
    }
}

/// Right-hand side `du/dt = f(u)` on the interior nodes, given the full
/// nodal vector including the fixed boundary values.
pub trait SemiDiscrete {
    fn stencils(&self) -> &Stencils;
    fn rhs(&self, u: &[f64], out: &mut [f64]);
    /// `∂f/∂u` restricted to interior unknowns, added into `jac` scaled by `scale`.
    fn add_jacobian(&self, u: &[f64], scale: f64, jac: &mut Banded);
}

pub struct BurgersMol {
    pub st: Stencils,
    pub nu: f64,
}

impl SemiDiscrete for BurgersMol {
    fn stencils(&self) -> &Stencils {
        &self.st
    }

    fn rhs(&self, u: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let ux = Stencils::apply(&self.st.d1, u, k);
            let uxx = Stencils::apply(&self.st.d2, u, k);
            *o = -u[k + 1] * ux + self.nu * uxx;
        }
    }

    fn add_jacobian(&self, u: &[f64], scale: f64, jac: &mut Banded) {
        let m = self.st.intervals - 1;
        for k in 0..m {
            let ux = Stencils::apply(&self.st.d1, u, k);
            jac.add(k, k, -scale * ux);
            for &(j, c) in &self.st.d1[k] {
                if (1..=m).contains(&j) {
                    jac.add(k, j - 1, -scale * u[k + 1] * c);
                }
            }
            for &(j, c) in &self.st.d2[k] {
                if (1..=m).contains(&j) {
                    jac.add(k, j - 1, scale * self.nu * c);
                }
            }
        }
    }
}

pub struct AllenCahnMol {
    pub st: Stencils,
    pub diffusion: f64,
    pub reaction: f64,
}

impl SemiDiscrete for AllenCahnMol {
    fn stencils(&self) -> &Stencils {
        &self.st
    }

    fn rhs(&self, u: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let v = u[k + 1];
            *o = self.diffusion * Stencils::apply(&self.st.d2, u, k) + self.reaction * (v - v * v * v);
        }
    }

    fn add_jacobian(&self, u: &[f64], scale: f64, jac: &mut Banded) {
        let m = self.st.intervals - 1;
        for k in 0..m {
            let v = u[k + 1];
            jac.add(k, k, scale * self.reaction * (1.0 - 3.0 * v * v));
            for &(j, c) in &self.st.d2[k] {
                if (1..=m).contains(&j) {
                    jac.add(k, j - 1, scale * self.diffusion * c);
                }
            }
        }
    }
}

pub const SDIRK_GAMMA: f64 = 0.435_866_521_508_459;

/// Butcher tableau `(A, b, c)` of the three-stage L-stable SDIRK.
pub fn sdirk3_tableau() -> ([[f64; 3]; 3], [f64; 3], [f64; 3]) {
    let g = SDIRK_GAMMA;
    let b1 = -(6.0 * g * g - 16.0 * g + 1.0) / 4.0;
    let b2 = (6.0 * g * g - 20.0 * g + 5.0) / 4.0;
    let a = [[g, 0.0, 0.0], [(1.0 - g) / 2.0, g, 0.0], [b1, b2, g]];
    (a, [b1, b2, g], [g, (1.0 + g) / 2.0, 1.0])
}

const NEWTON_TOL: f64 = 1e-13;
const NEWTON_MAX: usize = 30;

/// Integrates from `u0` (all nodes) with step `dt` for `steps` steps, keeping
/// every `every`-th state including the initial one.
pub fn integrate(sys: &dyn SemiDiscrete, u0: &[f64], dt: f64, steps: usize, every: usize) -> Result<Vec<Vec<f64>>> {
    let st = sys.stencils();
    let nodes = st.intervals + 1;
    let m = st.intervals - 1;
    if u0.len() != nodes || every == 0 {
        return Err(Error::Oracle("bad initial state or snapshot stride".into()));
    }
    let (a, _, _) = sdirk3_tableau();
    let g = SDIRK_GAMMA;
    let mut u = u0.to_vec();
    let mut out = vec![u.clone()];
    let mut k = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
    let mut stage = u.clone();
    let mut f = vec![0.0; m];
    let mut jac = Banded::zeros(m, 4, 4);
    for step in 0..steps {
        for s in 0..3 {
            // explicit part: y + dt Σ_{j<s} a_sj K_j
            let mut base: Vec<f64> = u[1..=m].to_vec();
            for (j, kj) in k.iter().enumerate().take(s) {
                for (b, kv) in base.iter_mut().zip(kj) {
                    *b += dt * a[s][j] * kv;
                }
            }
            stage.copy_from_slice(&u);
            // frozen Jacobian at the predictor: I - dt γ J(u_n)
            jac.clear();
            for i in 0..m {
                jac.add(i, i, 1.0);
            }
            sys.add_jacobian(&stage, -dt * g, &mut jac);
            jac.factor()?;
            let mut converged = false;
            for _ in 0..NEWTON_MAX {
                sys.rhs(&stage, &mut f);
                let mut res: Vec<f64> = (0..m).map(|i| -(stage[i + 1] - base[i] - dt * g * f[i])).collect();
                jac.solve(&mut res);
                let mut delta = 0.0f64;
                let mut scale = 0.0f64;
                for i in 0..m {
                    stage[i + 1] += res[i];
                    delta = delta.max(res[i].abs());
                    scale = scale.max(stage[i + 1].abs());
                }
                if !delta.is_finite() {
                    return Err(Error::Oracle(format!("Newton diverged at step {step}")));
                }
                if delta <= NEWTON_TOL * (1.0 + scale) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Oracle(format!("Newton did not converge at step {step}, stage {s}")));
            }
            for i in 0..m {
                k[s][i] = (stage[i + 1] - base[i]) / (dt * g);
            }
        }
        // stiffly accurate: the last stage is the new state
        u.copy_from_slice(&stage);
        if (step + 1) % every == 0 {
            out.push(u.clone());
        }
    }
    Ok(out)
}

/// Allen-Cahn states on `intervals` cells at `t = j·dt·every`.
pub fn allen_cahn_solve(intervals: usize, dt: f64, steps: usize, every: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let st = Stencils::new(intervals)?;
    let x = st.nodes();
    let mut u0: Vec<f64> = x.iter().map(|&x| x * x * (PI * x).cos()).collect();
    u0[0] = -1.0;
    u0[intervals] = -1.0;
    let sys = AllenCahnMol { st, diffusion: ALLEN_CAHN_DIFFUSION, reaction: ALLEN_CAHN_REACTION };
    let snaps = integrate(&sys, &u0, dt, steps, every)?;
    Ok((x, snaps))
}

/// Burgers state at `t = dt·steps` on `intervals` cells.
pub fn burgers_fd_solve(intervals: usize, dt: f64, steps: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let st = Stencils::new(intervals)?;
    let x = st.nodes();
    let mut u0: Vec<f64> = x.iter().map(|&x| -(PI * x).sin()).collect();
    u0[0] = 0.0;
    u0[intervals] = 0.0;
    let sys = BurgersMol { st, nu: BURGERS_NU };
    let mut snaps = integrate(&sys, &u0, dt, steps, steps.max(1))?;
    Ok((x, snaps.pop().expect("final state")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_lu_solves() {
        let n = 12;
        let mut a = Banded::zeros(n, 4, 4);
        for i in 0..n {
            for j in i.saturating_sub(4)..=(i + 4).min(n - 1) {
                let v = if i == j { 10.0 } else { 1.0 / (1.0 + (i as f64 - 2.0 * j as f64).abs()) };
                a.add(i, j, v);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut b = a.mul_vec(&x);
        let mut lu = a.clone();
        lu.factor().unwrap();
        lu.solve(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn stencils_exact_on_quartics() {
        let st = Stencils::new(16).unwrap();
        let x = st.nodes();
        let u: Vec<f64> = x.iter().map(|x| x.powi(4) - 2.0 * x.powi(3) + x).collect();
        for k in 0..15 {
            let xi = x[k + 1];
            let d1 = Stencils::apply(&st.d1, &u, k);
            let d2 = Stencils::apply(&st.d2, &u, k);
            assert!((d1 - (4.0 * xi.powi(3) - 6.0 * xi * xi + 1.0)).abs() < 1e-10, "d1 row {k}");
            assert!((d2 - (12.0 * xi * xi - 12.0 * xi)).abs() < 1e-8, "d2 row {k}");
        }
    }

    #[test]
    fn tableau_consistency() {
        let (a, b, c) = sdirk3_tableau();
        for i in 0..3 {
            assert!((a[i].iter().sum::<f64>() - c[i]).abs() < 1e-15);
        }
        // order conditions up to three
        let g = SDIRK_GAMMA;
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((b.iter().zip(&c).map(|(b, c)| b * c).sum::<f64>() - 0.5).abs() < 1e-14);
        assert!((b.iter().zip(&c).map(|(b, c)| b * c * c).sum::<f64>() - 1.0 / 3.0).abs() < 1e-12);
        // γ is the root of the L-stability cubic
        assert!((g.powi(3) - 3.0 * g * g + 1.5 * g - 1.0 / 6.0).abs() < 1e-14);
    }

    /// Linear heat equation `u_t = u_xx` with `u = e^{-π²t/4} cos(πx/2)`.
    #[test]
    fn integrator_third_order_on_heat_equation() {
        struct Heat(Stencils);
        impl SemiDiscrete for Heat {
            fn stencils(&self) -> &Stencils {
                &self.0
            }
            fn rhs(&self, u: &[f64], out: &mut [f64]) {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = Stencils::apply(&self.0.d2, u, k);
                }
            }
            fn add_jacobian(&self, _: &[f64], scale: f64, jac: &mut Banded) {
                let m = self.0.intervals - 1;
                for k in 0..m {
                    for &(j, c) in &self.0.d2[k] {
                        if (1..=m).contains(&j) {
                            jac.add(k, j - 1, scale * c);
                        }
                    }
                }
            }
        }
        let err = |steps: usize| {
            let st = Stencils::new(256).unwrap();
            let x = st.nodes();
            let u0: Vec<f64> = x.iter().map(|x| (PI * x / 2.0).cos()).collect();
            let out = integrate(&Heat(st), &u0, 0.5 / steps as f64, steps, steps).unwrap();
            let decay = (-PI * PI / 8.0).exp();
            out[1].iter().zip(&x).map(|(u, x)| (u - decay * (PI * x / 2.0).cos()).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(10), err(20));
        assert!(e1 / e2 > 6.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn allen_cahn_keeps_boundary_and_bounds() {
        let (_, snaps) = allen_cahn_solve(128, 1e-2, 100, 50).unwrap();
        for s in &snaps {
            assert_eq!(s[0], -1.0);
            assert_eq!(s[128], -1.0);
            assert!(s.iter().all(|v| v.abs() <= 1.0 + 1e-3));
        }
    }
}

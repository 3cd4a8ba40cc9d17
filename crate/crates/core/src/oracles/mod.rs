//! Reference solutions for the benchmarks without a closed form.
//!
//! * Burgers: Cole-Hopf integral evaluated by adaptive Gauss-Legendre
//!   quadrature ([`burgers_reference`]), cross-checked against a finite-
//!   difference solve.
//! * Allen-Cahn: method-of-lines solve on a fine grid, stored as snapshots
//!   and read back with tensor cubic interpolation ([`allen_cahn_reference`]).
//!
//! Nothing here touches the network code. Grids are cached on disk under
//! `$PINN_ORACLE_CACHE` as a raw `f64` blob plus a checksummed JSON sidecar.

mod burgers;
mod mol;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::storage::{atomic_write, f64_from_le_bytes, f64_to_le_bytes, sha256_hex};

pub use burgers::{burgers_point, burgers_reference, gauss_legendre, QUADRATURE_TOL};
pub use mol::{
    allen_cahn_solve, burgers_fd_solve, integrate, sdirk3_tableau, AllenCahnMol, Banded, BurgersMol, SemiDiscrete,
    Stencils, SDIRK_GAMMA,
};

pub const CACHE_ENV: &str = "PINN_ORACLE_CACHE";
const FORMAT_VERSION: u32 = 1;

/// Allen-Cahn reference: cells, time step and snapshot stride.
pub const ALLEN_CAHN_CELLS: usize = 2048;
pub const ALLEN_CAHN_DT: f64 = 5e-4;
const ALLEN_CAHN_STRIDE: usize = 4;
/// Burgers tabulation used for plotting; evaluation goes through quadrature.
pub const BURGERS_GRID_CELLS: usize = 512;
const BURGERS_GRID_TIMES: usize = 101;
/// Cross-check finite-difference solve: `Δx = 1/2048`.
pub const BURGERS_FD_CELLS: usize = 4096;
pub const BURGERS_FD_DT: f64 = 2.5e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverId {
    BurgersColeHopf,
    AllenCahnMol,
}

impl SolverId {
    pub const ALL: [SolverId; 2] = [SolverId::BurgersColeHopf, SolverId::AllenCahnMol];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::BurgersColeHopf => "burgers_cole_hopf",
            Self::AllenCahnMol => "allen_cahn_mol",
        }
    }

    pub fn default_resolution(&self) -> usize {
        match self {
            Self::BurgersColeHopf => BURGERS_GRID_CELLS,
            Self::AllenCahnMol => ALLEN_CAHN_CELLS,
        }
    }
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub solver: SolverId,
    /// Spatial cells of the solve that produced the grid.
    pub resolution: usize,
    pub nx: usize,
    pub nt: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

/// Solution snapshots on a uniform `(x, t)` grid, `values[it·nx + ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceGrid {
    meta: GridMeta,
    values: Vec<f64>,
}

fn cubic_weights(s: f64) -> [f64; 4] {
    [
        -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
        s * (s - 2.0) * (s - 3.0) / 2.0,
        -s * (s - 1.0) * (s - 3.0) / 2.0,
        s * (s - 1.0) * (s - 2.0) / 6.0,
    ]
}

/// First of the four stencil nodes around `v` and the local offset from it.
fn cubic_stencil(v: f64, lo: f64, h: f64, n: usize) -> (usize, f64) {
    let pos = (v - lo) / h;
    let i0 = (pos.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    (i0, pos - i0 as f64)
}

impl ReferenceGrid {
    pub fn new(meta: GridMeta, values: Vec<f64>) -> Result<Self> {
        if meta.nx < 4 || meta.nt < 4 || values.len() != meta.nx * meta.nt {
            return Err(Error::Oracle(format!(
                "grid {}x{} does not match {} values",
                meta.nx,
                meta.nt,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Oracle(format!("non-finite values in {} grid", meta.solver)));
        }
        Ok(Self { meta, values })
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn dx(&self) -> f64 {
        (self.meta.x_max - self.meta.x_min) / (self.meta.nx - 1) as f64
    }

    fn dt(&self) -> f64 {
        (self.meta.t_max - self.meta.t_min) / (self.meta.nt - 1) as f64
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        (0..self.meta.nx).map(|i| self.meta.x_min + i as f64 * self.dx()).collect()
    }

    pub fn t_nodes(&self) -> Vec<f64> {
        (0..self.meta.nt).map(|i| self.meta.t_min + i as f64 * self.dt()).collect()
    }

    pub fn node(&self, ix: usize, it: usize) -> f64 {
        self.values[it * self.meta.nx + ix]
    }

    pub fn snapshot(&self, it: usize) -> &[f64] {
        &self.values[it * self.meta.nx..(it + 1) * self.meta.nx]
    }

    /// Tensor cubic Lagrange interpolation; exact at nodes.
    pub fn value_at(&self, x: f64, t: f64) -> Result<f64> {
        let m = &self.meta;
        let tol = 1e-12;
        if x < m.x_min - tol || x > m.x_max + tol || t < m.t_min - tol || t > m.t_max + tol {
            return Err(Error::Oracle(format!("query ({x}, {t}) outside the {} grid", m.solver)));
        }
        let (ix, sx) = cubic_stencil(x, m.x_min, self.dx(), m.nx);
        let (it, st) = cubic_stencil(t, m.t_min, self.dt(), m.nt);
        let (wx, wt) = (cubic_weights(sx), cubic_weights(st));
        let mut acc = 0.0;
        for (a, wa) in wt.iter().enumerate() {
            let row = self.snapshot(it + a);
            let inner: f64 = wx.iter().enumerate().map(|(b, wb)| wb * row[ix + b]).sum();
            acc += wa * inner;
        }
        Ok(acc)
    }
}

/// Computes the reference grid for `solver` at `resolution` cells.
pub fn build_grid(solver: SolverId, resolution: usize) -> Result<ReferenceGrid> {
    match solver {
        SolverId::AllenCahnMol => {
            let steps = (1.0 / ALLEN_CAHN_DT).round() as usize;
            let (x, snaps) = allen_cahn_solve(resolution, ALLEN_CAHN_DT, steps, ALLEN_CAHN_STRIDE)?;
            let meta = GridMeta {
                solver,
                resolution,
                nx: x.len(),
                nt: snaps.len(),
                x_min: -1.0,
                x_max: 1.0,
                t_min: 0.0,
                t_max: 1.0,
            };
            ReferenceGrid::new(meta, snaps.concat())
        }
        SolverId::BurgersColeHopf => {
            let nx = resolution + 1;
            let nt = BURGERS_GRID_TIMES;
            let mut values = Vec::with_capacity(nx * nt);
            for it in 0..nt {
                let t = it as f64 / (nt - 1) as f64;
                for ix in 0..nx {
                    let x = -1.0 + 2.0 * ix as f64 / resolution as f64;
                    values.push(burgers_point(x, t)?);
                }
            }
            let meta = GridMeta { solver, resolution, nx, nt, x_min: -1.0, x_max: 1.0, t_min: 0.0, t_max: 1.0 };
            ReferenceGrid::new(meta, values)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheSidecar {
    format_version: u32,
    meta: GridMeta,
    len: usize,
    sha256: String,
}

/// `$PINN_ORACLE_CACHE`, or a directory under the system temp dir.
pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("rsmote-oracle-cache"))
}

pub fn cache_path(dir: &Path, solver: SolverId, resolution: usize) -> PathBuf {
    dir.join(format!("{}-{resolution}.bin", solver.as_str()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Hit,
    Built,
    /// The cached file failed its checksum and was recomputed.
    Rebuilt,
}

pub fn save_grid(path: &Path, grid: &ReferenceGrid) -> Result<()> {
    let bytes = f64_to_le_bytes(grid.values.iter().copied());
    let sidecar = CacheSidecar {
        format_version: FORMAT_VERSION,
        meta: grid.meta.clone(),
        len: grid.values.len(),
        sha256: sha256_hex(&bytes),
    };
    atomic_write(path, &bytes)?;
    atomic_write(&path.with_extension("json"), serde_json::to_string_pretty(&sidecar)?.as_bytes())
}

pub fn load_grid(path: &Path) -> Result<ReferenceGrid> {
    let corrupt = |reason: String| Error::Corrupt { path: path.display().to_string(), reason };
    let sidecar: CacheSidecar = serde_json::from_slice(&fs::read(path.with_extension("json"))?)
        .map_err(|e| corrupt(format!("unreadable sidecar: {e}")))?;
    if sidecar.format_version != FORMAT_VERSION {
        return Err(corrupt(format!("format version {}", sidecar.format_version)));
    }
    let bytes = fs::read(path)?;
    if bytes.len() != sidecar.len * 8 {
        return Err(corrupt("length mismatch".into()));
    }
    if sha256_hex(&bytes) != sidecar.sha256 {
        return Err(corrupt("checksum mismatch".into()));
    }
    ReferenceGrid::new(sidecar.meta, f64_from_le_bytes(&bytes))
}

/// Loads the cached grid for `(solver, resolution)` or computes and stores it.
pub fn load_or_build(solver: SolverId, resolution: usize, dir: &Path) -> Result<(ReferenceGrid, CacheStatus)> {
    let path = cache_path(dir, solver, resolution);
    let status = match load_grid(&path) {
        Ok(grid) if grid.meta.solver == solver && grid.meta.resolution == resolution => {
            return Ok((grid, CacheStatus::Hit))
        }
        Ok(_) | Err(Error::Corrupt { .. }) => CacheStatus::Rebuilt,
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => CacheStatus::Built,
        Err(Error::Io(_)) => CacheStatus::Rebuilt,
        Err(e) => return Err(e),
    };
    let grid = build_grid(solver, resolution)?;
    save_grid(&path, &grid)?;
    Ok((grid, status))
}

/// The default-resolution grid for `solver`, shared for the process lifetime.
pub fn reference_grid(solver: SolverId) -> Result<&'static ReferenceGrid> {
    static GRIDS: OnceLock<Mutex<HashMap<SolverId, &'static ReferenceGrid>>> = OnceLock::new();
    let mut map = GRIDS.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    if let Some(g) = map.get(&solver) {
        return Ok(g);
    }
    let (grid, _) = load_or_build(solver, solver.default_resolution(), &cache_dir())?;
    let leaked: &'static ReferenceGrid = Box::leak(Box::new(grid));
    map.insert(solver, leaked);
    Ok(leaked)
}

/// Allen-Cahn reference at `(x_i, t_i)` pairs from the cached grid.
pub fn allen_cahn_reference(x: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    if x.len() != t.len() {
        return Err(Error::Oracle(format!("{} x values but {} t values", x.len(), t.len())));
    }
    let grid = reference_grid(SolverId::AllenCahnMol)?;
    x.iter().zip(t).map(|(&x, &t)| grid.value_at(x, t)).collect()
}

/// Reference values at `(x_i, t_i)` pairs for either solver.
pub fn reference_values(solver: SolverId, x: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    match solver {
        SolverId::BurgersColeHopf => burgers_reference(x, t),
        SolverId::AllenCahnMol => allen_cahn_reference(x, t),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `value < threshold` when true, `value >= threshold` otherwise.
    pub below: bool,
    pub passed: bool,
}

impl ValidationCheck {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, below: true, passed: value < threshold }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, below: false, passed: value >= threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub solver: SolverId,
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn write_json(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}-validation.json", self.solver.as_str()));
        atomic_write(&path, serde_json::to_string_pretty(self)?.as_bytes())?;
        Ok(path)
    }
}

fn max_abs_diff(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    a.zip(b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Burgers: quadrature vs a `Δx = 1/2048` finite-difference solve at `t = 0.5`.
fn validate_burgers() -> Result<ValidationReport> {
    let steps = (0.5 / BURGERS_FD_DT).round() as usize;
    let (x, fd) = burgers_fd_solve(BURGERS_FD_CELLS, BURGERS_FD_DT, steps)?;
    let t = vec![0.5; x.len()];
    let quad = burgers_reference(&x, &t)?;
    let diff = max_abs_diff(quad.iter().copied(), fd.iter().copied());
    let center = burgers_point(0.0, 0.5)?.abs();
    Ok(ValidationReport {
        solver: SolverId::BurgersColeHopf,
        checks: vec![
            ValidationCheck::below("max |quadrature - finite difference| at t=0.5", diff, 1e-4),
            ValidationCheck::below("|u(0, 0.5)|", center, 1e-10),
        ],
    })
}

/// Allen-Cahn: three successive grid doublings, compared on the coarse nodes.
fn validate_allen_cahn() -> Result<ValidationReport> {
    let base = ALLEN_CAHN_CELLS / 2;
    let steps = (1.0 / ALLEN_CAHN_DT).round() as usize;
    let every = steps / 4;
    let solves: Vec<Vec<Vec<f64>>> = [base, 2 * base, 4 * base]
        .iter()
        .map(|&n| allen_cahn_solve(n, ALLEN_CAHN_DT, steps, every).map(|(_, s)| s))
        .collect::<Result<_>>()?;
    let coarse_diff = |fine: usize| -> f64 {
        let stride = 1 << fine;
        (1..solves[0].len())
            .map(|k| {
                let a = solves[fine - 1][k].iter().step_by(stride / 2);
                let b = solves[fine][k].iter().step_by(stride);
                max_abs_diff(a.copied(), b.copied())
            })
            .fold(0.0, f64::max)
    };
    let e1 = coarse_diff(1);
    let e2 = coarse_diff(2);
    let grid = reference_grid(SolverId::AllenCahnMol)?;
    let bound = grid.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(ValidationReport {
        solver: SolverId::AllenCahnMol,
        checks: vec![
            ValidationCheck::below(&format!("max |u_{base} - u_{}|", 2 * base), e1, 1e-4),
            ValidationCheck::at_least("self-convergence ratio", e1 / e2, 4.0),
            ValidationCheck::below("max |u| on reference grid", bound, 1.01),
        ],
    })
}

/// Resolution-doubling and cross-oracle checks for `solver`.
pub fn validate_oracle(solver: SolverId) -> Result<ValidationReport> {
    match solver {
        SolverId::BurgersColeHopf => validate_burgers(),
        SolverId::AllenCahnMol => validate_allen_cahn(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_grid() -> ReferenceGrid {
        let (nx, nt) = (9, 6);
        let meta = GridMeta {
            solver: SolverId::AllenCahnMol,
            resolution: 8,
            nx,
            nt,
            x_min: -1.0,
            x_max: 1.0,
            t_min: 0.0,
            t_max: 1.0,
        };
        let mut values = Vec::new();
        for it in 0..nt {
            let t = it as f64 / 5.0;
            for ix in 0..nx {
                let x = -1.0 + ix as f64 * 0.25;
                values.push(x.powi(3) * t * t - 2.0 * x * t.powi(3) + 1.0);
            }
        }
        ReferenceGrid::new(meta, values).unwrap()
    }

    #[test]
    fn cubic_interpolation_exact_for_cubics() {
        let g = toy_grid();
        for &(x, t) in &[(0.13, 0.37), (-0.99, 0.02), (1.0, 1.0), (0.5, 0.6)] {
            let want = x * x * x * t * t - 2.0 * x * t * t * t + 1.0;
            assert!((g.value_at(x, t).unwrap() - want).abs() < 1e-12);
        }
        assert!(g.value_at(1.5, 0.5).is_err());
    }

    #[test]
    fn cache_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let g = toy_grid();
        let path = dir.path().join("toy.bin");
        save_grid(&path, &g).unwrap();
        assert_eq!(load_grid(&path).unwrap(), g);
        let mut bytes = fs::read(&path).unwrap();
        bytes[3] ^= 0xff;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_grid(&path), Err(Error::Corrupt { .. })));
    }

    #[test]
    fn load_or_build_statuses() {
        let dir = tempfile::tempdir().unwrap();
        let (a, s1) = load_or_build(SolverId::BurgersColeHopf, 16, dir.path()).unwrap();
        assert_eq!(s1, CacheStatus::Built);
        let (b, s2) = load_or_build(SolverId::BurgersColeHopf, 16, dir.path()).unwrap();
        assert_eq!(s2, CacheStatus::Hit);
        assert_eq!(a, b);
        let path = cache_path(dir.path(), SolverId::BurgersColeHopf, 16);
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] ^= 1;
        fs::write(&path, bytes).unwrap();
        let (c, s3) = load_or_build(SolverId::BurgersColeHopf, 16, dir.path()).unwrap();
        assert_eq!(s3, CacheStatus::Rebuilt);
        assert_eq!(a, c);
    }
}

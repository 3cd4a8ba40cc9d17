//! Computational domains and uniform random sampling of their interiors,
//! boundaries and initial-time slices.
//!
//! Coordinates are laid out as rows of an `n × D` matrix. Time-dependent
//! domains append `t` as the last coordinate.

use ndarray::{Array2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::seeded;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// Axis-aligned box in space.
    Box,
    /// Spatial box times a time interval; time is the last coordinate.
    BoxWithTime,
    /// `(r, θ)` rectangle; `θ` is periodic and only the outer radius is a boundary.
    PolarRectangle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain<T> {
    kind: DomainKind,
    lower: Vec<T>,
    upper: Vec<T>,
    periodic: Vec<usize>,
}

impl<T: Real> Domain<T> {
    fn checked(kind: DomainKind, lower: Vec<T>, upper: Vec<T>, periodic: Vec<usize>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(invalid("domain bounds must be non-empty and of equal length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(invalid("domain requires finite lower[i] < upper[i]"));
        }
        if kind == DomainKind::BoxWithTime && lower.len() < 2 {
            return Err(invalid("box_with_time needs at least one spatial coordinate"));
        }
        Ok(Self { kind, lower, upper, periodic })
    }

    pub fn hypercube(dim: usize, lo: T, hi: T) -> Result<Self> {
        Self::checked(DomainKind::Box, vec![lo; dim], vec![hi; dim], vec![])
    }

    pub fn new_box(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        Self::checked(DomainKind::Box, lower, upper, vec![])
    }

    /// Spatial box `lower × upper` crossed with `[t0, t1]`.
    pub fn box_with_time(mut lower: Vec<T>, mut upper: Vec<T>, t0: T, t1: T) -> Result<Self> {
        lower.push(t0);
        upper.push(t1);
        Self::checked(DomainKind::BoxWithTime, lower, upper, vec![])
    }

    /// `r ∈ [r0, r1]`, `θ ∈ [θ0, θ1]` with `θ` periodic.
    pub fn polar_rectangle(r0: T, r1: T, theta0: T, theta1: T) -> Result<Self> {
        if r0 < T::zero() {
            return Err(invalid("polar radius must be nonnegative"));
        }
        Self::checked(DomainKind::PolarRectangle, vec![r0, theta0], vec![r1, theta1], vec![1])
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn periodic_coords(&self) -> &[usize] {
        &self.periodic
    }

    /// Total coordinate count `D` (including time).
    pub fn coord_dim(&self) -> usize {
        self.lower.len()
    }

    pub fn spatial_dim(&self) -> usize {
        match self.kind {
            DomainKind::BoxWithTime => self.lower.len() - 1,
            _ => self.lower.len(),
        }
    }

    pub fn time_coord(&self) -> Option<usize> {
        (self.kind == DomainKind::BoxWithTime).then(|| self.lower.len() - 1)
    }

    /// Closed-set membership.
    pub fn contains(&self, p: &[T]) -> bool {
        p.len() == self.coord_dim() && p.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (l, u))| x >= l && x <= u)
    }

    /// Open-set membership.
    pub fn contains_strict(&self, p: &[T]) -> bool {
        p.len() == self.coord_dim() && p.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (l, u))| x > l && x < u)
    }

    fn widths(&self) -> Vec<T> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| *u - *l).collect()
    }

    /// Draws a coordinate uniformly from the open interval `(lower[i], upper[i])`.
    fn open_coord(&self, i: usize, rng: &mut ChaCha8Rng) -> T {
        let dist = Uniform::new(self.lower[i], self.upper[i]);
        loop {
            let v = dist.sample(rng);
            if v > self.lower[i] && v < self.upper[i] {
                return v;
            }
        }
    }

    /// Closed-interval draw, used along faces.
    fn closed_coord(&self, i: usize, rng: &mut ChaCha8Rng) -> T {
        Uniform::new_inclusive(self.lower[i], self.upper[i]).sample(rng)
    }

    fn fill_interior(&self, out: &mut Array2<T>, rng: &mut ChaCha8Rng) {
        for mut row in out.axis_iter_mut(Axis(0)) {
            for (i, v) in row.iter_mut().enumerate() {
                *v = self.open_coord(i, rng);
            }
        }
    }
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    Ok(())
}

/// `n` i.i.d. uniform points from the open interior. Pure in `(domain, n, seed)`.
pub fn sample_interior<T: Real>(domain: &Domain<T>, n: usize, seed: u64) -> Result<Array2<T>> {
    check_count(n)?;
    let mut rng = seeded(seed);
    let mut out = Array2::zeros((n, domain.coord_dim()));
    domain.fill_interior(&mut out, &mut rng);
    Ok(out)
}

/// `n` points uniform over the spatial boundary.
///
/// * box: faces chosen with probability proportional to their area;
/// * box_with_time: spatial walls over the whole time interval (neither the
///   initial nor the terminal slice; see [`sample_initial_slice`]);
/// * polar_rectangle: the outer circle `r = r1` only.
pub fn sample_boundary<T: Real>(domain: &Domain<T>, n: usize, seed: u64) -> Result<Array2<T>> {
    check_count(n)?;
    let mut rng = seeded(seed);
    let dim = domain.coord_dim();
    let mut out = Array2::zeros((n, dim));
    match domain.kind {
        DomainKind::PolarRectangle => {
            let r1 = domain.upper[0];
            for mut row in out.axis_iter_mut(Axis(0)) {
                row[0] = r1;
                row[1] = domain.closed_coord(1, &mut rng);
            }
        }
        DomainKind::Box | DomainKind::BoxWithTime => {
            let spatial = domain.spatial_dim();
            let widths = domain.widths();
            // face area for coordinate i = product of the other widths
            let areas: Vec<f64> = (0..spatial)
                .map(|i| {
                    widths
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, w)| w.to_f64_lossy())
                        .product::<f64>()
                })
                .collect();
            let total: f64 = areas.iter().sum::<f64>() * 2.0;
            for mut row in out.axis_iter_mut(Axis(0)) {
                let mut pick = rng.gen::<f64>() * total;
                let mut face = (spatial - 1, true);
                'outer: for (i, a) in areas.iter().enumerate() {
                    for upper in [false, true] {
                        if pick < *a {
                            face = (i, upper);
                            break 'outer;
                        }
                        pick -= a;
                    }
                }
                for (j, v) in row.iter_mut().enumerate() {
                    *v = if j == face.0 {
                        if face.1 {
                            domain.upper[j]
                        } else {
                            domain.lower[j]
                        }
                    } else {
                        domain.closed_coord(j, &mut rng)
                    };
                }
            }
        }
    }
    Ok(out)
}

/// `n` points on the initial slice `t = t0` of a time-dependent domain,
/// spatial coordinates uniform over the closed spatial box.
pub fn sample_initial_slice<T: Real>(domain: &Domain<T>, n: usize, seed: u64) -> Result<Array2<T>> {
    check_count(n)?;
    let tc = domain
        .time_coord()
        .ok_or_else(|| invalid("initial slice requires a box_with_time domain"))?;
    let mut rng = seeded(seed);
    let mut out = Array2::zeros((n, domain.coord_dim()));
    for mut row in out.axis_iter_mut(Axis(0)) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if j == tc { domain.lower[tc] } else { domain.closed_coord(j, &mut rng) };
        }
    }
    Ok(out)
}

/// Pairs `(a, b)` that differ only along the periodic coordinates: `a` sits at
/// the lower end and `b` at the upper end; all other coordinates are shared.
pub fn sample_periodic_pairs<T: Real>(domain: &Domain<T>, n: usize, seed: u64) -> Result<(Array2<T>, Array2<T>)> {
    check_count(n)?;
    if domain.periodic.is_empty() {
        return Err(invalid("domain has no periodic coordinates"));
    }
    let mut rng = seeded(seed);
    let dim = domain.coord_dim();
    let mut a = Array2::zeros((n, dim));
    let mut b = Array2::zeros((n, dim));
    for i in 0..n {
        for j in 0..dim {
            if domain.periodic.contains(&j) {
                a[[i, j]] = domain.lower[j];
                b[[i, j]] = domain.upper[j];
            } else {
                let v = domain.closed_coord(j, &mut rng);
                a[[i, j]] = v;
                b[[i, j]] = v;
            }
        }
    }
    Ok((a, b))
}

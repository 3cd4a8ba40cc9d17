//! Benchmark PDE problems: residual operators, boundary/initial constraints
//! and exact or reference solutions.
//!
//! Residuals are pointwise functions of the input, the network value and its
//! requested derivatives. Each problem also reports the partial derivatives of
//! its residual with respect to those quantities, which is all the loss needs
//! to backpropagate into the network parameters.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dual::Dual2;
use crate::error::{invalid, Error, Result};
use crate::geometry::{sample_boundary, sample_initial_slice, sample_periodic_pairs, Domain};
use crate::network::{ClosedForm, DerivRequest, FieldModel, MlpConfig};
use crate::oracles::SolverId;
use crate::rng::derive_seed;
use crate::scalar::Real;

/// Kinematic viscosity of the Burgers benchmark, `1/(100π)`.
pub const BURGERS_NU: f64 = 1.0 / (100.0 * std::f64::consts::PI);
pub const ALLEN_CAHN_DIFFUSION: f64 = 0.001;
pub const ALLEN_CAHN_REACTION: f64 = 5.0;
pub const REACTION_DECAY: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemName {
    Laplace,
    Burgers,
    AllenCahn,
    Elliptic,
    ReactionDiffusion,
}

impl ProblemName {
    pub const ALL: [ProblemName; 5] =
        [Self::Laplace, Self::Burgers, Self::AllenCahn, Self::Elliptic, Self::ReactionDiffusion];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Laplace => "laplace",
            Self::Burgers => "burgers",
            Self::AllenCahn => "allen_cahn",
            Self::Elliptic => "elliptic",
            Self::ReactionDiffusion => "reaction_diffusion",
        }
    }

    /// Whether the problem takes a dimension parameter.
    pub fn is_dimensional(&self) -> bool {
        matches!(self, Self::Elliptic | Self::ReactionDiffusion)
    }
}

impl fmt::Display for ProblemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown problem {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Laplace,
    Burgers,
    AllenCahn,
    Elliptic { d: usize },
    ReactionDiffusion { d: usize },
}

/// Where the error of a trained model is measured against.
#[derive(Debug, Clone, Copy)]
pub enum Reference<T> {
    Exact(ClosedForm<T>),
    Oracle(SolverId),
}

/// Partial derivatives of a pointwise residual with respect to the network
/// value and the requested first/second derivatives.
#[derive(Debug, Clone)]
pub struct ResidualPartials<T> {
    pub du: T,
    pub dfirst: Vec<T>,
    pub dsecond: Vec<T>,
}

impl<T: Real> ResidualPartials<T> {
    pub fn for_request(req: &DerivRequest) -> Self {
        Self { du: T::zero(), dfirst: vec![T::zero(); req.first.len()], dsecond: vec![T::zero(); req.second.len()] }
    }
}

/// Fixed boundary/initial/periodicity constraint points of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySet<T> {
    /// Points with prescribed values (walls, outer circle, initial slice).
    pub dirichlet: Array2<T>,
    pub targets: Array1<T>,
    /// Periodic twins: `u(periodic_a[i]) = u(periodic_b[i])`.
    pub periodic_a: Array2<T>,
    pub periodic_b: Array2<T>,
}

impl<T: Real> BoundarySet<T> {
    /// Number of scalar constraints (Dirichlet rows plus periodic pairs).
    pub fn len(&self) -> usize {
        self.dirichlet.nrows() + self.periodic_a.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All points the network must be evaluated at: Dirichlet rows, then
    /// periodic `a` rows, then periodic `b` rows.
    pub fn stacked_points(&self) -> Array2<T> {
        let dim = self.dirichlet.ncols().max(self.periodic_a.ncols());
        let rows = self.dirichlet.nrows() + 2 * self.periodic_a.nrows();
        let mut out = Array2::zeros((rows, dim));
        let nd = self.dirichlet.nrows();
        let np = self.periodic_a.nrows();
        if nd > 0 {
            out.slice_mut(s![0..nd, ..]).assign(&self.dirichlet);
        }
        if np > 0 {
            out.slice_mut(s![nd..nd + np, ..]).assign(&self.periodic_a);
            out.slice_mut(s![nd + np.., ..]).assign(&self.periodic_b);
        }
        out
    }

    /// Violations from network values at [`Self::stacked_points`].
    pub fn violations(&self, values: ArrayView1<T>) -> Array1<T> {
        let nd = self.dirichlet.nrows();
        let np = self.periodic_a.nrows();
        let mut out = Array1::zeros(nd + np);
        for i in 0..nd {
            out[i] = values[i] - self.targets[i];
        }
        for i in 0..np {
            out[nd + i] = values[nd + i] - values[nd + np + i];
        }
        out
    }

    /// Maps per-constraint cotangents back to per-point value cotangents.
    pub fn value_cotangent(&self, g: ArrayView1<T>) -> Array1<T> {
        let nd = self.dirichlet.nrows();
        let np = self.periodic_a.nrows();
        let mut out = Array1::zeros(nd + 2 * np);
        for i in 0..nd {
            out[i] = g[i];
        }
        for i in 0..np {
            out[nd + i] = g[nd + i];
            out[nd + np + i] = -g[nd + i];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeProblem<T> {
    kind: Kind,
    domain: Domain<T>,
    net_depth: usize,
    net_width: usize,
}

fn laplace_exact<T: Real>(x: &[Dual2<T>]) -> Dual2<T> {
    x[0] * x[1].cos()
}

fn elliptic_exact<T: Real>(x: &[Dual2<T>]) -> Dual2<T> {
    let s = x.iter().copied().sum::<Dual2<T>>().scale(T::one() / T::from_usize_lossy(x.len()));
    s * s + s.sin()
}

fn reaction_diffusion_exact<T: Real>(x: &[Dual2<T>]) -> Dual2<T> {
    let (t, space) = x.split_last().expect("time coordinate");
    let sq = space.iter().map(|v| *v * *v).sum::<Dual2<T>>();
    sq.scale(T::lit(0.5)) * t.scale(T::lit(-REACTION_DECAY)).exp()
}

impl<T: Real> PdeProblem<T> {
    /// Polar Laplace equation on `r ∈ [0,1], θ ∈ [0,2π]`, solution `r cos θ`.
    pub fn laplace() -> Self {
        let domain = Domain::polar_rectangle(T::zero(), T::one(), T::zero(), T::lit(2.0) * T::PI()).unwrap();
        Self { kind: Kind::Laplace, domain, net_depth: 3, net_width: 20 }
    }

    /// Viscous Burgers on `x ∈ [-1,1], t ∈ [0,1]` with `u(x,0) = -sin(πx)`.
    pub fn burgers() -> Self {
        let domain = Domain::box_with_time(vec![-T::one()], vec![T::one()], T::zero(), T::one()).unwrap();
        Self { kind: Kind::Burgers, domain, net_depth: 3, net_width: 64 }
    }

    /// Allen-Cahn on `x ∈ [-1,1], t ∈ [0,1]` with `u(x,0) = x² cos(πx)`, `u(±1,t) = -1`.
    pub fn allen_cahn() -> Self {
        let domain = Domain::box_with_time(vec![-T::one()], vec![T::one()], T::zero(), T::one()).unwrap();
        Self { kind: Kind::AllenCahn, domain, net_depth: 3, net_width: 64 }
    }

    /// `-Δu = f` on `[-1,1]^d` with Dirichlet data from the exact solution.
    pub fn elliptic(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("elliptic dimension must be >= 1"));
        }
        let domain = Domain::hypercube(d, -T::one(), T::one())?;
        Ok(Self { kind: Kind::Elliptic { d }, domain, net_depth: 3, net_width: 2 * d })
    }

    /// `u_t = Δu - 0.2u - d e^{-0.2t}` on `[-1,1]^d × [0,1]`.
    pub fn reaction_diffusion(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("reaction-diffusion dimension must be >= 1"));
        }
        let domain = Domain::box_with_time(vec![-T::one(); d], vec![T::one(); d], T::zero(), T::one())?;
        Ok(Self { kind: Kind::ReactionDiffusion { d }, domain, net_depth: 3, net_width: 2 * d })
    }

    /// Registry lookup; `dim` is required for the dimensional problems and
    /// must be absent or 2 for the others.
    pub fn by_name(name: ProblemName, dim: Option<usize>) -> Result<Self> {
        match (name, dim) {
            (ProblemName::Elliptic, Some(d)) => Self::elliptic(d),
            (ProblemName::ReactionDiffusion, Some(d)) => Self::reaction_diffusion(d),
            (ProblemName::Elliptic | ProblemName::ReactionDiffusion, None) => {
                Err(invalid(format!("problem {name} needs a dimension")))
            }
            (_, Some(d)) if d != 2 => Err(invalid(format!("problem {name} is two-dimensional, got dimension {d}"))),
            (ProblemName::Laplace, _) => Ok(Self::laplace()),
            (ProblemName::Burgers, _) => Ok(Self::burgers()),
            (ProblemName::AllenCahn, _) => Ok(Self::allen_cahn()),
        }
    }

    pub fn name(&self) -> ProblemName {
        match self.kind {
            Kind::Laplace => ProblemName::Laplace,
            Kind::Burgers => ProblemName::Burgers,
            Kind::AllenCahn => ProblemName::AllenCahn,
            Kind::Elliptic { .. } => ProblemName::Elliptic,
            Kind::ReactionDiffusion { .. } => ProblemName::ReactionDiffusion,
        }
    }

    /// Label such as `elliptic-d10` or `burgers`.
    pub fn label(&self) -> String {
        match self.kind {
            Kind::Elliptic { d } | Kind::ReactionDiffusion { d } => format!("{}-d{d}", self.name()),
            _ => self.name().to_string(),
        }
    }

    pub fn domain(&self) -> &Domain<T> {
        &self.domain
    }

    pub fn spatial_dim(&self) -> usize {
        self.domain.spatial_dim()
    }

    pub fn net_config(&self) -> MlpConfig {
        MlpConfig { input_dim: self.domain.coord_dim(), depth: self.net_depth, width: self.net_width }
    }

    pub fn interior_request(&self) -> DerivRequest {
        match self.kind {
            Kind::Laplace => DerivRequest::new(vec![0], vec![0, 1]),
            Kind::Burgers => DerivRequest::new(vec![0, 1], vec![0]),
            Kind::AllenCahn => DerivRequest::new(vec![1], vec![0]),
            Kind::Elliptic { d } => DerivRequest::new(vec![], (0..d).collect()),
            Kind::ReactionDiffusion { d } => DerivRequest::new(vec![d], (0..d).collect()),
        }
    }

    pub fn reference(&self) -> Reference<T> {
        match self.exact_solution() {
            Some(f) => Reference::Exact(f),
            None => Reference::Oracle(match self.kind {
                Kind::Burgers => SolverId::BurgersColeHopf,
                _ => SolverId::AllenCahnMol,
            }),
        }
    }

    pub fn exact_solution(&self) -> Option<ClosedForm<T>> {
        let dim = self.domain.coord_dim();
        match self.kind {
            Kind::Laplace => Some(ClosedForm::new(dim, laplace_exact::<T>)),
            Kind::Elliptic { .. } => Some(ClosedForm::new(dim, elliptic_exact::<T>)),
            Kind::ReactionDiffusion { .. } => Some(ClosedForm::new(dim, reaction_diffusion_exact::<T>)),
            Kind::Burgers | Kind::AllenCahn => None,
        }
    }

    fn elliptic_source(x: ArrayView1<T>) -> T {
        let d = T::from_usize_lossy(x.len());
        let s = x.sum() / d;
        (s.sin() - T::lit(2.0)) / d
    }

    /// Residual at one point. `du`/`d2u` follow [`Self::interior_request`].
    /// When `partials` is given it receives `∂r/∂(u, du, d2u)`.
    pub fn residual_at(
        &self,
        x: ArrayView1<T>,
        u: T,
        du: ArrayView1<T>,
        d2u: ArrayView1<T>,
        partials: Option<&mut ResidualPartials<T>>,
    ) -> T {
        let one = T::one();
        match self.kind {
            Kind::Laplace => {
                let r = x[0];
                if let Some(p) = partials {
                    p.du = T::zero();
                    p.dfirst[0] = r;
                    p.dsecond[0] = r * r;
                    p.dsecond[1] = one;
                }
                r * du[0] + r * r * d2u[0] + d2u[1]
            }
            Kind::Burgers => {
                let nu = T::lit(BURGERS_NU);
                let (ux, ut) = (du[0], du[1]);
                if let Some(p) = partials {
                    p.du = ux;
                    p.dfirst[0] = u;
                    p.dfirst[1] = one;
                    p.dsecond[0] = -nu;
                }
                ut + u * ux - nu * d2u[0]
            }
            Kind::AllenCahn => {
                let eps = T::lit(ALLEN_CAHN_DIFFUSION);
                let k = T::lit(ALLEN_CAHN_REACTION);
                if let Some(p) = partials {
                    p.du = -k * (one - T::lit(3.0) * u * u);
                    p.dfirst[0] = one;
                    p.dsecond[0] = -eps;
                }
                du[0] - eps * d2u[0] - k * (u - u * u * u)
            }
            Kind::Elliptic { .. } => {
                if let Some(p) = partials {
                    p.du = T::zero();
                    p.dsecond.iter_mut().for_each(|v| *v = -one);
                }
                -d2u.sum() - Self::elliptic_source(x)
            }
            Kind::ReactionDiffusion { d } => {
                let decay = T::lit(REACTION_DECAY);
                if let Some(p) = partials {
                    p.du = decay;
                    p.dfirst[0] = one;
                    p.dsecond.iter_mut().for_each(|v| *v = -one);
                }
                let t = x[d];
                du[0] - d2u.sum() + decay * u + T::from_usize_lossy(d) * (-decay * t).exp()
            }
        }
    }

    /// Signed residuals at every row of `pts`.
    pub fn residual<M: FieldModel<T> + ?Sized>(&self, model: &M, pts: ArrayView2<T>) -> Result<Array1<T>> {
        let jets = model.jets(pts, &self.interior_request())?;
        let out: Array1<T> = pts
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, x)| self.residual_at(x, jets.value[i], jets.first.row(i), jets.second.row(i), None))
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFailure(format!("non-finite {} residual", self.name())));
        }
        Ok(out)
    }

    /// Splits a boundary budget evenly among the problem's constraint components.
    pub fn boundary_split(&self, n_boundary: usize) -> Vec<usize> {
        let parts = match self.kind {
            Kind::Elliptic { .. } => 1,
            _ => 2,
        };
        let base = n_boundary / parts;
        (0..parts).map(|i| base + usize::from(i < n_boundary % parts)).collect()
    }

    /// Samples the boundary, initial and periodicity constraints of a run.
    pub fn sample_boundary_set(&self, n_boundary: usize, seed: u64) -> Result<BoundarySet<T>> {
        if n_boundary < self.boundary_split(n_boundary).len() {
            return Err(invalid("boundary budget too small for the problem's constraint components"));
        }
        let split = self.boundary_split(n_boundary);
        let dim = self.domain.coord_dim();
        let empty = || Array2::<T>::zeros((0, dim));
        let s0 = derive_seed(seed, 0);
        let s1 = derive_seed(seed, 1);
        let (dirichlet, periodic_a, periodic_b) = match self.kind {
            Kind::Laplace => {
                let outer = sample_boundary(&self.domain, split[0], s0)?;
                let (a, b) = sample_periodic_pairs(&self.domain, split[1], s1)?;
                (outer, a, b)
            }
            Kind::Burgers | Kind::AllenCahn | Kind::ReactionDiffusion { .. } => {
                let walls = sample_boundary(&self.domain, split[0], s0)?;
                let init = sample_initial_slice(&self.domain, split[1], s1)?;
                (ndarray::concatenate![ndarray::Axis(0), walls, init], empty(), empty())
            }
            Kind::Elliptic { .. } => (sample_boundary(&self.domain, split[0], s0)?, empty(), empty()),
        };
        let targets = dirichlet.rows().into_iter().map(|x| self.boundary_target(x)).collect();
        Ok(BoundarySet { dirichlet, targets, periodic_a, periodic_b })
    }

    /// Prescribed value at a Dirichlet/initial point.
    pub fn boundary_target(&self, x: ArrayView1<T>) -> T {
        let pi = T::PI();
        match self.kind {
            Kind::Laplace => x[1].cos(),
            Kind::Burgers => {
                if x[1] == T::zero() && x[0].abs() < T::one() {
                    -(pi * x[0]).sin()
                } else {
                    T::zero()
                }
            }
            Kind::AllenCahn => {
                if x[1] == T::zero() && x[0].abs() < T::one() {
                    x[0] * x[0] * (pi * x[0]).cos()
                } else {
                    -T::one()
                }
            }
            Kind::Elliptic { .. } | Kind::ReactionDiffusion { .. } => {
                let f = self.exact_solution().expect("closed form");
                f.eval(x.as_slice().expect("contiguous row"))
            }
        }
    }

    /// Per-constraint violations of `model` on a boundary set.
    pub fn boundary_residual<M: FieldModel<T> + ?Sized>(&self, model: &M, set: &BoundarySet<T>) -> Result<Array1<T>> {
        let values = model.values(set.stacked_points().view())?;
        Ok(set.violations(values.view()))
    }
}

/// Residual of the polar Laplace operator `r·u_r + r²·u_rr + u_θθ`.
pub fn laplace_polar_residual<T: Real, M: FieldModel<T> + ?Sized>(model: &M, pts: ArrayView2<T>) -> Result<Array1<T>> {
    PdeProblem::laplace().residual(model, pts)
}

/// `u_t + u·u_x - u_xx/(100π)`.
pub fn burgers_residual<T: Real, M: FieldModel<T> + ?Sized>(model: &M, pts: ArrayView2<T>) -> Result<Array1<T>> {
    PdeProblem::burgers().residual(model, pts)
}

/// `u_t - 0.001·u_xx - 5(u - u³)`.
pub fn allen_cahn_residual<T: Real, M: FieldModel<T> + ?Sized>(model: &M, pts: ArrayView2<T>) -> Result<Array1<T>> {
    PdeProblem::allen_cahn().residual(model, pts)
}

/// `-Δu - f` with `f = (sin(s) - 2)/d`, `s` the coordinate mean.
pub fn elliptic_residual<T: Real, M: FieldModel<T> + ?Sized>(model: &M, pts: ArrayView2<T>) -> Result<Array1<T>> {
    PdeProblem::elliptic(pts.ncols())?.residual(model, pts)
}

/// `u_t - Δu + 0.2u + d·e^{-0.2t}`.
pub fn reaction_diffusion_residual<T: Real, M: FieldModel<T> + ?Sized>(
    model: &M,
    pts: ArrayView2<T>,
    d: usize,
) -> Result<Array1<T>> {
    PdeProblem::reaction_diffusion(d)?.residual(model, pts)
}

/// Per-constraint violations; see [`PdeProblem::boundary_residual`].
pub fn boundary_residual<T: Real, M: FieldModel<T> + ?Sized>(
    problem: &PdeProblem<T>,
    model: &M,
    set: &BoundarySet<T>,
) -> Result<Array1<T>> {
    problem.boundary_residual(model, set)
}

use ndarray::{Array1, Array2, ArrayView2};

use super::Mlp;
use crate::error::{invalid, Error, Result};
use crate::pde::{BoundarySet, PdeProblem, ResidualPartials};
use crate::scalar::Real;

/// Components of the weighted PINN loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts<T> {
    /// `interior + gamma · boundary`
    pub total: T,
    /// Mean squared PDE residual over the interior points.
    pub interior: T,
    /// Mean squared violation over the boundary constraints.
    pub boundary: T,
}

/// `mean |r|² + gamma · mean |b|²` and its exact gradient over all parameters.
///
/// The gradient differentiates through the input-space derivatives that enter
/// the residual.
pub fn loss_and_param_gradient<T: Real>(
    problem: &PdeProblem<T>,
    net: &Mlp<T>,
    interior: ArrayView2<T>,
    boundary: &BoundarySet<T>,
    gamma: T,
) -> Result<(LossParts<T>, Array1<T>)> {
    let n = interior.nrows();
    if n == 0 || boundary.is_empty() {
        return Err(invalid("loss needs non-empty interior and boundary point sets"));
    }
    let req = problem.interior_request();
    let (jets, tape) = net.forward_tape(interior, &req)?;

    let scale = T::lit(2.0) / T::from_usize_lossy(n);
    let mut partials = ResidualPartials::for_request(&req);
    let mut g_value = Array1::zeros(n);
    let mut g_first = Array2::zeros((n, req.first.len()));
    let mut g_second = Array2::zeros((n, req.second.len()));
    let mut sq = T::zero();
    for (i, x) in interior.rows().into_iter().enumerate() {
        let r = problem.residual_at(x, jets.value[i], jets.first.row(i), jets.second.row(i), Some(&mut partials));
        if !r.is_finite() {
            return Err(Error::NumericFailure(format!("non-finite {} residual", problem.name())));
        }
        sq += r * r;
        let w = scale * r;
        g_value[i] = w * partials.du;
        for (k, d) in partials.dfirst.iter().enumerate() {
            g_first[[i, k]] = w * *d;
        }
        for (k, d) in partials.dsecond.iter().enumerate() {
            g_second[[i, k]] = w * *d;
        }
    }
    let interior_loss = sq / T::from_usize_lossy(n);
    let mut grad = tape.backward(net, g_value.view(), Some(g_first.view()), Some(g_second.view()));

    let (boundary_loss, g_b) = boundary_loss(net, boundary, gamma)?;
    if gamma != T::zero() {
        grad += &g_b;
    }
    let total = interior_loss + gamma * boundary_loss;
    if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericFailure("non-finite loss or gradient".into()));
    }
    Ok((LossParts { total, interior: interior_loss, boundary: boundary_loss }, grad))
}

/// Unweighted boundary loss and the gradient of `gamma ·` that loss.
pub fn boundary_loss<T: Real>(net: &Mlp<T>, boundary: &BoundarySet<T>, gamma: T) -> Result<(T, Array1<T>)> {
    let pts = boundary.stacked_points();
    let (jets, tape) = net.forward_tape(pts.view(), &super::DerivRequest::none())?;
    let v = boundary.violations(jets.value.view());
    let m = T::from_usize_lossy(v.len());
    let loss = v.iter().map(|x| *x * *x).sum::<T>() / m;
    if gamma == T::zero() {
        return Ok((loss, Array1::zeros(net.params().len())));
    }
    let g = v.mapv(|x| T::lit(2.0) * gamma * x / m);
    let cot = boundary.value_cotangent(g.view());
    Ok((loss, tape.backward(net, cot.view(), None, None)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_interior;
    use crate::network::MlpConfig;

    fn fd_check(problem: &PdeProblem<f64>, seed: u64) {
        let net = Mlp::<f64>::init(problem.net_config(), seed).unwrap();
        let pts = sample_interior(problem.domain(), 16, seed).unwrap();
        let bset = problem.sample_boundary_set(12, seed).unwrap();
        let (loss, grad) = loss_and_param_gradient(problem, &net, pts.view(), &bset, 0.7).unwrap();
        let f = |p: &Array1<f64>| loss_and_param_gradient(problem, &net.with_params(p), pts.view(), &bset, 0.7).unwrap().0.total;
        assert!(loss.total >= 0.0);
        let h = 1e-6;
        let step = (net.params().len() / 15).max(1);
        for k in (0..net.params().len()).step_by(step) {
            let mut p = net.params().clone();
            p[k] += h;
            let up = f(&p);
            p[k] -= 2.0 * h;
            let dn = f(&p);
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-6 + 1e-4 * fd.abs(), "{} param {k}: {} vs {fd}", problem.name(), grad[k]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        fd_check(&PdeProblem::laplace(), 1);
        fd_check(&PdeProblem::burgers(), 2);
        fd_check(&PdeProblem::allen_cahn(), 3);
        fd_check(&PdeProblem::elliptic(3).unwrap(), 4);
        fd_check(&PdeProblem::reaction_diffusion(2).unwrap(), 5);
    }

    #[test]
    fn gamma_zero_ignores_boundary() {
        let p = PdeProblem::<f64>::allen_cahn();
        let net = Mlp::init(MlpConfig::new(2, 2, 8).unwrap(), 0).unwrap();
        let pts = sample_interior(p.domain(), 30, 0).unwrap();
        let b1 = p.sample_boundary_set(20, 1).unwrap();
        let b2 = p.sample_boundary_set(40, 2).unwrap();
        let (l1, g1) = loss_and_param_gradient(&p, &net, pts.view(), &b1, 0.0).unwrap();
        let (l2, g2) = loss_and_param_gradient(&p, &net, pts.view(), &b2, 0.0).unwrap();
        assert_eq!(l1.total, l2.total);
        assert_eq!(g1, g2);
    }

    #[test]
    fn empty_sets_rejected() {
        let p = PdeProblem::<f64>::burgers();
        let net = Mlp::init(p.net_config(), 0).unwrap();
        let b = p.sample_boundary_set(10, 0).unwrap();
        let empty = ndarray::Array2::<f64>::zeros((0, 2));
        assert!(loss_and_param_gradient(&p, &net, empty.view(), &b, 1.0).is_err());
    }
}

//! Fully connected tanh networks, their input-space derivatives and the
//! parameter gradients of training losses.
//!
//! Derivatives with respect to the inputs are propagated forward as
//! directional jets (value, first and second directional derivative per
//! coordinate). All jets of a batch are stacked into one tall matrix per
//! layer so every layer costs a single matrix product; the reverse pass
//! differentiates through the jet recursion to reach the parameters.

mod checkpoint;
mod jets;
mod loss;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::dual::Dual2;
use crate::error::{invalid, Error, Result};
use crate::rng::seeded;
use crate::scalar::Real;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use jets::JetTape;
pub use loss::{boundary_loss, loss_and_param_gradient, LossParts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    /// Number of hidden layers.
    pub depth: usize,
    pub width: usize,
}

impl MlpConfig {
    pub fn new(input_dim: usize, depth: usize, width: usize) -> Result<Self> {
        let c = Self { input_dim, depth, width };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.depth == 0 || self.width == 0 {
            return Err(invalid(format!("mlp config needs input_dim, depth, width >= 1, got {self:?}")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.depth + 1);
        shapes.push((self.input_dim, self.width));
        for _ in 1..self.depth {
            shapes.push((self.width, self.width));
        }
        shapes.push((self.width, 1));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    fn layout(&self) -> Vec<LayerSlot> {
        let mut off = 0;
        self.layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let slot = LayerSlot { weight: off, bias: off + fan_in * fan_out, fan_in, fan_out };
                off += fan_in * fan_out + fan_out;
                slot
            })
            .collect()
    }
}

/// Position of one affine layer inside the flat parameter vector. Weights are
/// stored row-major as `fan_in × fan_out`, followed by the bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerSlot {
    pub weight: usize,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LayerSlot {
    fn weight_len(&self) -> usize {
        self.fan_in * self.fan_out
    }
}

/// A tanh multilayer perceptron with scalar output and its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    config: MlpConfig,
    layout: Vec<LayerSlot>,
    params: Array1<T>,
}

impl<T: Real> Mlp<T> {
    /// Glorot-uniform weights and zero biases.
    pub fn init(config: MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let mut params = Array1::zeros(config.param_count());
        let mut rng = seeded(seed);
        for slot in &layout {
            let limit = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            for w in params.slice_mut(s![slot.weight..slot.weight + slot.weight_len()]).iter_mut() {
                *w = T::lit(dist.sample(&mut rng));
            }
        }
        Ok(Self { config, layout, params })
    }

    pub fn from_params(config: MlpConfig, params: Array1<T>) -> Result<Self> {
        config.validate()?;
        if params.len() != config.param_count() {
            return Err(invalid(format!(
                "parameter vector has length {}, config needs {}",
                params.len(),
                config.param_count()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NumericFailure("non-finite parameter".into()));
        }
        Ok(Self { layout: config.layout(), config, params })
    }

    pub fn zeros(config: MlpConfig) -> Result<Self> {
        Self::from_params(config, Array1::zeros(config.param_count()))
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn params(&self) -> &Array1<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Array1<T> {
        &mut self.params
    }

    pub fn set_params(&mut self, values: &Array1<T>) {
        assert_eq!(values.len(), self.params.len(), "parameter length mismatch");
        self.params.assign(values);
    }

    /// Copy of this network carrying different parameters (same architecture).
    pub fn with_params(&self, values: &Array1<T>) -> Self {
        let mut out = self.clone();
        out.set_params(values);
        out
    }

    pub fn num_layers(&self) -> usize {
        self.layout.len()
    }

    /// Weight matrix of layer `l` as `fan_in × fan_out`.
    pub fn weights(&self, l: usize) -> ArrayView2<'_, T> {
        let slot = self.layout[l];
        self.params
            .slice(s![slot.weight..slot.weight + slot.weight_len()])
            .into_shape_with_order((slot.fan_in, slot.fan_out))
            .expect("contiguous layer weights")
    }

    pub fn weights_mut(&mut self, l: usize) -> ArrayViewMut2<'_, T> {
        let slot = self.layout[l];
        self.params
            .slice_mut(s![slot.weight..slot.weight + slot.weight_len()])
            .into_shape_with_order((slot.fan_in, slot.fan_out))
            .expect("contiguous layer weights")
    }

    pub fn bias(&self, l: usize) -> ArrayView1<'_, T> {
        let slot = self.layout[l];
        self.params.slice(s![slot.bias..slot.bias + slot.fan_out])
    }

    pub fn bias_mut(&mut self, l: usize) -> ArrayViewMut1<'_, T> {
        let slot = self.layout[l];
        self.params.slice_mut(s![slot.bias..slot.bias + slot.fan_out])
    }

    pub(crate) fn slots(&self) -> &[LayerSlot] {
        &self.layout
    }

    /// Batched network output, one value per row of `pts`.
    pub fn forward(&self, pts: ArrayView2<T>) -> Result<Array1<T>> {
        self.check_input(pts)?;
        let (out, _) = jets::forward(self, pts, &JetPlan::values_only(), false);
        finite_or_fail(out.view(), "network output")?;
        Ok(out)
    }

    /// Forward pass that keeps everything the reverse pass needs.
    pub fn forward_tape(&self, pts: ArrayView2<T>, request: &DerivRequest) -> Result<(PointJets<T>, JetTape<T>)> {
        self.check_input(pts)?;
        request.validate(self.config.input_dim)?;
        let plan = JetPlan::new(request);
        let (out, tape) = jets::forward(self, pts, &plan, true);
        let jets = plan.unpack(out.view(), pts.nrows());
        jets.check_finite()?;
        Ok((jets, tape.expect("tape requested")))
    }

    fn check_input(&self, pts: ArrayView2<T>) -> Result<()> {
        if pts.ncols() != self.config.input_dim {
            return Err(invalid(format!(
                "points have {} coordinates, network expects {}",
                pts.ncols(),
                self.config.input_dim
            )));
        }
        Ok(())
    }
}

/// Glorot-uniform initialization; see [`Mlp::init`].
pub fn init_params<T: Real>(config: MlpConfig, seed: u64) -> Result<Mlp<T>> {
    Mlp::init(config, seed)
}

fn finite_or_fail<T: Real>(v: ArrayView1<T>, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericFailure(format!("non-finite {what}")))
    }
}

/// Which input-space derivatives to compute: first derivatives along
/// `first` and diagonal second derivatives along `second`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DerivRequest {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
}

impl DerivRequest {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(first: Vec<usize>, second: Vec<usize>) -> Self {
        Self { first, second }
    }

    /// Same coordinate set for every order up to `max_order`.
    pub fn up_to(coords: &[usize], max_order: u32) -> Result<Self> {
        match max_order {
            0 => Ok(Self::none()),
            1 => Ok(Self::new(coords.to_vec(), vec![])),
            2 => Ok(Self::new(coords.to_vec(), coords.to_vec())),
            k => Err(Error::Unsupported(format!("derivative order {k} (at most 2 supported)"))),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        for &c in self.first.iter().chain(&self.second) {
            if c >= dim {
                return Err(invalid(format!("derivative coordinate {c} out of range for input dim {dim}")));
            }
        }
        Ok(())
    }
}

/// Network value and requested derivatives at a batch of points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointJets<T> {
    pub value: Array1<T>,
    /// `n × request.first.len()`
    pub first: Array2<T>,
    /// `n × request.second.len()`, diagonal Hessian entries
    pub second: Array2<T>,
}

impl<T: Real> PointJets<T> {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Sum of all requested diagonal second derivatives.
    pub fn laplacian(&self) -> Array1<T> {
        self.second.sum_axis(ndarray::Axis(1))
    }

    fn check_finite(&self) -> Result<()> {
        finite_or_fail(self.value.view(), "network output")?;
        if self.first.iter().chain(self.second.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NumericFailure("non-finite network derivative".into()));
        }
        Ok(())
    }
}

/// Anything that can be evaluated together with its input-space derivatives:
/// a network or a closed-form function.
pub trait FieldModel<T: Real> {
    fn input_dim(&self) -> usize;

    fn jets(&self, pts: ArrayView2<T>, request: &DerivRequest) -> Result<PointJets<T>>;

    fn values(&self, pts: ArrayView2<T>) -> Result<Array1<T>> {
        Ok(self.jets(pts, &DerivRequest::none())?.value)
    }
}

impl<T: Real> FieldModel<T> for Mlp<T> {
    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn jets(&self, pts: ArrayView2<T>, request: &DerivRequest) -> Result<PointJets<T>> {
        self.check_input(pts)?;
        request.validate(self.config.input_dim)?;
        let plan = JetPlan::new(request);
        let (out, _) = jets::forward(self, pts, &plan, false);
        let jets = plan.unpack(out.view(), pts.nrows());
        jets.check_finite()?;
        Ok(jets)
    }

    fn values(&self, pts: ArrayView2<T>) -> Result<Array1<T>> {
        self.forward(pts)
    }
}

/// Exact first and diagonal second input derivatives of a model, with an
/// optional Laplacian over the requested coordinates.
pub fn spatial_derivatives<T: Real, M: FieldModel<T> + ?Sized>(
    model: &M,
    pts: ArrayView2<T>,
    coords: &[usize],
    max_order: u32,
) -> Result<PointJets<T>> {
    let request = DerivRequest::up_to(coords, max_order)?;
    model.jets(pts, &request)
}

/// A closed-form function evaluated through forward-mode [`Dual2`] numbers.
#[derive(Clone, Copy)]
pub struct ClosedForm<T> {
    dim: usize,
    f: fn(&[Dual2<T>]) -> Dual2<T>,
}

impl<T: Real> ClosedForm<T> {
    pub fn new(dim: usize, f: fn(&[Dual2<T>]) -> Dual2<T>) -> Self {
        Self { dim, f }
    }

    pub fn eval(&self, x: &[T]) -> T {
        let args: Vec<_> = x.iter().map(|v| Dual2::constant(*v)).collect();
        (self.f)(&args).v
    }
}

impl<T> std::fmt::Debug for ClosedForm<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClosedForm").field("dim", &self.dim).finish()
    }
}

impl<T: Real> FieldModel<T> for ClosedForm<T> {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn jets(&self, pts: ArrayView2<T>, request: &DerivRequest) -> Result<PointJets<T>> {
        if pts.ncols() != self.dim {
            return Err(invalid("closed form: wrong point dimension"));
        }
        request.validate(self.dim)?;
        let n = pts.nrows();
        let mut value = Array1::zeros(n);
        let mut first = Array2::zeros((n, request.first.len()));
        let mut second = Array2::zeros((n, request.second.len()));
        let mut args: Vec<Dual2<T>> = Vec::with_capacity(self.dim);
        let mut seeded_eval = |row: ArrayView1<T>, coord: Option<usize>| {
            args.clear();
            args.extend(row.iter().enumerate().map(|(j, v)| {
                if Some(j) == coord {
                    Dual2::variable(*v)
                } else {
                    Dual2::constant(*v)
                }
            }));
            (self.f)(&args)
        };
        for (i, row) in pts.rows().into_iter().enumerate() {
            value[i] = seeded_eval(row, None).v;
            for (k, &c) in request.first.iter().enumerate() {
                first[[i, k]] = seeded_eval(row, Some(c)).d;
            }
            for (k, &c) in request.second.iter().enumerate() {
                second[[i, k]] = seeded_eval(row, Some(c)).dd;
            }
        }
        let jets = PointJets { value, first, second };
        jets.check_finite()?;
        Ok(jets)
    }
}

/// Direction bookkeeping for the stacked jet layout.
///
/// Block 0 holds values, blocks `1..=m` first directional derivatives along
/// `dirs`, blocks `m+1..` second derivatives along `dirs[second[q]]`.
#[derive(Debug, Clone)]
pub(crate) struct JetPlan {
    pub dirs: Vec<usize>,
    pub second: Vec<usize>,
    first_out: Vec<usize>,
    second_out: Vec<usize>,
}

impl JetPlan {
    pub fn values_only() -> Self {
        Self { dirs: vec![], second: vec![], first_out: vec![], second_out: vec![] }
    }

    pub fn new(req: &DerivRequest) -> Self {
        let mut dirs: Vec<usize> = req.first.iter().chain(&req.second).copied().collect();
        dirs.sort_unstable();
        dirs.dedup();
        let pos = |c: usize| dirs.iter().position(|d| *d == c).expect("coordinate in dirs");
        let mut second: Vec<usize> = req.second.iter().map(|&c| pos(c)).collect();
        second.sort_unstable();
        second.dedup();
        let first_out = req.first.iter().map(|&c| pos(c)).collect();
        let second_out = req
            .second
            .iter()
            .map(|&c| {
                let p = pos(c);
                second.iter().position(|q| *q == p).unwrap()
            })
            .collect();
        Self { dirs, second, first_out, second_out }
    }

    pub fn blocks(&self) -> usize {
        1 + self.dirs.len() + self.second.len()
    }

    pub fn first_block(&self, p: usize) -> usize {
        1 + p
    }

    pub fn second_block(&self, q: usize) -> usize {
        1 + self.dirs.len() + q
    }

    fn unpack<T: Real>(&self, stacked: ArrayView1<T>, n: usize) -> PointJets<T> {
        let block = |b: usize| stacked.slice(s![b * n..(b + 1) * n]);
        let value = block(0).to_owned();
        let mut first = Array2::zeros((n, self.first_out.len()));
        for (k, &p) in self.first_out.iter().enumerate() {
            first.column_mut(k).assign(&block(self.first_block(p)));
        }
        let mut second = Array2::zeros((n, self.second_out.len()));
        for (k, &q) in self.second_out.iter().enumerate() {
            second.column_mut(k).assign(&block(self.second_block(q)));
        }
        PointJets { value, first, second }
    }

    /// Packs per-output cotangents into the stacked layout.
    pub(crate) fn pack_cotangent<T: Real>(
        &self,
        n: usize,
        value: ArrayView1<T>,
        first: Option<ArrayView2<T>>,
        second: Option<ArrayView2<T>>,
    ) -> Array1<T> {
        let mut out = Array1::zeros(n * self.blocks());
        out.slice_mut(s![0..n]).assign(&value);
        if let Some(first) = first {
            for (k, &p) in self.first_out.iter().enumerate() {
                let b = self.first_block(p);
                let mut dst = out.slice_mut(s![b * n..(b + 1) * n]);
                dst += &first.column(k);
            }
        }
        if let Some(second) = second {
            for (k, &q) in self.second_out.iter().enumerate() {
                let b = self.second_block(q);
                let mut dst = out.slice_mut(s![b * n..(b + 1) * n]);
                dst += &second.column(k);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fd_second(net: &Mlp<f64>, x: f64, h: f64) -> f64 {
        let f = |v: f64| net.forward(array![[v]].view()).unwrap()[0];
        (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
    }

    #[test]
    fn param_count_matches_architecture() {
        let c = MlpConfig::new(2, 3, 20).unwrap();
        assert_eq!(c.param_count(), (2 * 20 + 20) + 2 * (20 * 20 + 20) + (20 + 1));
        assert_eq!(c.param_count(), 921);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let c = MlpConfig::new(2, 3, 20).unwrap();
        let a = Mlp::<f64>::init(c, 4).unwrap();
        let b = Mlp::<f64>::init(c, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.bias(0).iter().all(|v| *v == 0.0));
        let big = Mlp::<f64>::init(MlpConfig::new(100, 1, 100).unwrap(), 1).unwrap();
        let bound = (6.0f64 / 200.0).sqrt();
        assert_eq!(big.weights(0).len(), 10_000);
        assert!(big.weights(0).iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::<f64>::zeros(MlpConfig::new(3, 2, 5).unwrap()).unwrap();
        let out = net.forward(Array2::from_elem((7, 3), 0.3).view()).unwrap();
        assert_eq!(out.len(), 7);
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hand_computed_single_unit() {
        let c = MlpConfig::new(1, 1, 1).unwrap();
        // layout: w1, b1, w2, b2
        let net = Mlp::from_params(c, array![1.0, 0.0, 2.0, 0.5]).unwrap();
        let out = net.forward(array![[0.0], [1.0]].view()).unwrap();
        assert_eq!(out[0], 0.5);
        assert!((out[1] - (2.0 * 1.0f64.tanh() + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn wrong_length_rejected() {
        let c = MlpConfig::new(1, 1, 1).unwrap();
        assert!(Mlp::from_params(c, array![1.0, 2.0]).is_err());
        assert!(MlpConfig::new(0, 1, 1).is_err());
    }

    #[test]
    fn order_three_is_unsupported() {
        let net = Mlp::<f64>::init(MlpConfig::new(1, 1, 3).unwrap(), 0).unwrap();
        let err = spatial_derivatives(&net, array![[0.1]].view(), &[0], 3).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn second_derivative_matches_finite_difference_1d() {
        let net = Mlp::<f64>::init(MlpConfig::new(1, 3, 8).unwrap(), 9).unwrap();
        let xs = array![[-0.7], [0.1], [0.9]];
        let j = spatial_derivatives(&net, xs.view(), &[0], 2).unwrap();
        for (i, x) in xs.column(0).iter().enumerate() {
            let fd = fd_second(&net, *x, 1e-3);
            let ad = j.second[[i, 0]];
            assert!((ad - fd).abs() <= 1e-4 * ad.abs().max(1e-2), "{ad} vs {fd}");
        }
    }

    #[test]
    fn laplacian_invariant_under_input_permutation() {
        let c = MlpConfig::new(4, 2, 6).unwrap();
        let net = Mlp::<f64>::init(c, 3).unwrap();
        let perm = [2usize, 0, 3, 1];
        let mut permuted = net.clone();
        {
            let w = net.weights(0).to_owned();
            let mut wp = permuted.weights_mut(0);
            for (new_row, &old_row) in perm.iter().enumerate() {
                wp.row_mut(new_row).assign(&w.row(old_row));
            }
        }
        let pts = crate::geometry::sample_interior(&crate::geometry::Domain::hypercube(4, -1.0, 1.0).unwrap(), 10, 1)
            .unwrap();
        let mut ppts = pts.clone();
        for (new_col, &old_col) in perm.iter().enumerate() {
            ppts.column_mut(new_col).assign(&pts.column(old_col));
        }
        let all = [0, 1, 2, 3];
        let a = spatial_derivatives(&net, pts.view(), &all, 2).unwrap().laplacian();
        let b = spatial_derivatives(&permuted, ppts.view(), &all, 2).unwrap().laplacian();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_laplacian_of_elliptic_solution() {
        fn u(x: &[Dual2<f64>]) -> Dual2<f64> {
            let s = x.iter().copied().sum::<Dual2<f64>>().scale(0.1);
            s * s + s.sin()
        }
        let cf = ClosedForm::new(10, u);
        let all: Vec<usize> = (0..10).collect();
        let j = spatial_derivatives(&cf, Array2::zeros((1, 10)).view(), &all, 2).unwrap();
        assert!((j.laplacian()[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn network_and_dual_jets_agree() {
        // per-point Dual2 evaluation of the same network, a fully independent route
        let c = MlpConfig::new(3, 2, 5).unwrap();
        let net = Mlp::<f64>::init(c, 17).unwrap();
        let pts = array![[0.1, -0.4, 0.8], [-0.9, 0.3, 0.2]];
        let req = DerivRequest::new(vec![2, 0], vec![1, 2]);
        let j = net.jets(pts.view(), &req).unwrap();
        let eval = |row: ArrayView1<f64>, coord: usize| {
            let mut h: Vec<Dual2<f64>> =
                row.iter().enumerate().map(|(k, v)| if k == coord { Dual2::variable(*v) } else { Dual2::constant(*v) }).collect();
            for l in 0..net.num_layers() {
                let w = net.weights(l);
                let b = net.bias(l);
                let mut next = Vec::new();
                for o in 0..w.ncols() {
                    let mut z = Dual2::constant(b[o]);
                    for (i, hi) in h.iter().enumerate() {
                        z = z + hi.scale(w[[i, o]]);
                    }
                    next.push(if l + 1 < net.num_layers() { z.tanh() } else { z });
                }
                h = next;
            }
            h[0]
        };
        for (i, row) in pts.rows().into_iter().enumerate() {
            assert!((eval(row, 0).v - j.value[i]).abs() < 1e-14);
            assert!((eval(row, 2).d - j.first[[i, 0]]).abs() < 1e-13);
            assert!((eval(row, 0).d - j.first[[i, 1]]).abs() < 1e-13);
            assert!((eval(row, 1).dd - j.second[[i, 0]]).abs() < 1e-13);
            assert!((eval(row, 2).dd - j.second[[i, 1]]).abs() < 1e-13);
        }
    }
}

//! Stacked directional-jet forward pass and its reverse-mode adjoint.
//!
//! For a hidden layer with `a = tanh(z)` and `s = 1 - a²` the jets obey
//!
//! ```text
//! da_p  = s · dz_p
//! d2a_q = s · d2z_q - 2 a s · dz_p(q)²
//! ```
//!
//! and the affine maps act blockwise: `z = a_prev W + b`, `dz = da_prev W`,
//! `d2z = d2a_prev W`. At the input, `da_p = e_p` and `d2a = 0`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{JetPlan, Mlp, PointJets};
use crate::scalar::Real;

/// Saved forward state for one batch.
#[derive(Debug, Clone)]
pub struct JetTape<T> {
    plan: JetPlan,
    n: usize,
    input: Array2<T>,
    /// Stacked pre-activations per hidden layer, `(blocks·n) × width`.
    pre: Vec<Array2<T>>,
    /// Stacked activations per hidden layer.
    act: Vec<Array2<T>>,
}

pub(crate) fn forward<T: Real>(
    net: &Mlp<T>,
    x: ArrayView2<T>,
    plan: &JetPlan,
    keep: bool,
) -> (Array1<T>, Option<JetTape<T>>) {
    let n = x.nrows();
    let blocks = plan.blocks();
    let hidden = net.num_layers() - 1;
    let mut pres = Vec::new();
    let mut acts = Vec::new();

    // input layer
    let w0 = net.weights(0);
    let width = w0.ncols();
    let mut pre = Array2::<T>::zeros((blocks * n, width));
    {
        let mut z = pre.slice_mut(s![0..n, ..]);
        z.assign(&x.dot(&w0));
        z += &net.bias(0);
        for (p, &c) in plan.dirs.iter().enumerate() {
            let b = plan.first_block(p);
            pre.slice_mut(s![b * n..(b + 1) * n, ..]).assign(&w0.row(c));
        }
    }
    let mut act = activate(&pre, plan, n);

    for l in 1..hidden {
        let mut next_pre = act.dot(&net.weights(l));
        {
            let mut z = next_pre.slice_mut(s![0..n, ..]);
            z += &net.bias(l);
        }
        let next_act = activate(&next_pre, plan, n);
        if keep {
            pres.push(std::mem::replace(&mut pre, next_pre));
            acts.push(std::mem::replace(&mut act, next_act));
        } else {
            pre = next_pre;
            act = next_act;
        }
    }

    let w_out = net.weights(hidden);
    let mut out = act.dot(&w_out.column(0));
    let b_out = net.bias(hidden)[0];
    out.slice_mut(s![0..n]).iter_mut().for_each(|v| *v += b_out);
    let tape = keep.then(|| {
        pres.push(pre);
        acts.push(act);
        JetTape { plan: plan.clone(), n, input: x.to_owned(), pre: pres, act: acts }
    });
    (out, tape)
}

fn activate<T: Real>(pre: &Array2<T>, plan: &JetPlan, n: usize) -> Array2<T> {
    let width = pre.ncols();
    let nw = n * width;
    let m = plan.dirs.len();
    let mut act = Array2::<T>::zeros(pre.raw_dim());
    let z = pre.as_slice().expect("standard layout");
    let a_all = act.as_slice_mut().expect("standard layout");
    let two = T::lit(2.0);
    for e in 0..nw {
        let a = z[e].tanh();
        let sd = T::one() - a * a;
        a_all[e] = a;
        for p in 0..m {
            let i = (1 + p) * nw + e;
            a_all[i] = sd * z[i];
        }
        for (q, &p) in plan.second.iter().enumerate() {
            let dz = z[(1 + p) * nw + e];
            let i = (1 + m + q) * nw + e;
            a_all[i] = sd * z[i] - two * a * sd * dz * dz;
        }
    }
    act
}

impl<T: Real> JetTape<T> {
    pub fn batch_len(&self) -> usize {
        self.n
    }

    /// Parameter gradient of `Σ_i gu_i u_i + Σ gfirst·∂u + Σ gsecond·∂²u`,
    /// with cotangents laid out like the [`PointJets`] of the forward call.
    pub fn backward(
        &self,
        net: &Mlp<T>,
        value: ArrayView1<T>,
        first: Option<ArrayView2<T>>,
        second: Option<ArrayView2<T>>,
    ) -> Array1<T> {
        let cot = self.plan.pack_cotangent(self.n, value, first, second);
        self.backward_stacked(net, cot.view())
    }

    pub(crate) fn backward_stacked(&self, net: &Mlp<T>, cot: ArrayView1<T>) -> Array1<T> {
        let n = self.n;
        let plan = &self.plan;
        let m = plan.dirs.len();
        let hidden = net.num_layers() - 1;
        let slots = net.slots();
        let mut grad = Array1::<T>::zeros(net.params().len());

        // output layer
        let last = &self.act[hidden - 1];
        let out_slot = slots[hidden];
        {
            let gw = last.t().dot(&cot);
            grad.slice_mut(s![out_slot.weight..out_slot.weight + out_slot.fan_in]).assign(&gw);
            grad[out_slot.bias] = cot.slice(s![0..n]).sum();
        }
        let w_out = net.weights(hidden);
        // dL/d(act) = cot ⊗ w_outᵀ
        let mut g_act = Array2::<T>::zeros(last.raw_dim());
        for (mut row, c) in g_act.axis_iter_mut(Axis(0)).zip(cot.iter()) {
            row.zip_mut_with(&w_out.column(0), |g, w| *g = *c * *w);
        }

        for l in (0..hidden).rev() {
            let pre = &self.pre[l];
            let act = &self.act[l];
            let width = pre.ncols();
            let nw = n * width;
            let mut g_pre = Array2::<T>::zeros(pre.raw_dim());
            {
                let z = pre.as_slice().unwrap();
                let av = act.as_slice().unwrap();
                let ga = g_act.as_slice().unwrap();
                let gz = g_pre.as_slice_mut().unwrap();
                let two = T::lit(2.0);
                let four = T::lit(4.0);
                for e in 0..nw {
                    let a = av[e];
                    let sd = T::one() - a * a;
                    let mut g_s = T::zero();
                    let mut g_a = ga[e];
                    for (q, &p) in plan.second.iter().enumerate() {
                        let i2 = (1 + m + q) * nw + e;
                        let i1 = (1 + p) * nw + e;
                        let g2 = ga[i2];
                        let dz = z[i1];
                        gz[i2] = g2 * sd;
                        // accumulated into the first-order slot, finished below
                        gz[i1] -= four * g2 * a * sd * dz;
                        g_s += g2 * (z[i2] - two * a * dz * dz);
                        g_a -= two * g2 * sd * dz * dz;
                    }
                    for p in 0..m {
                        let i1 = (1 + p) * nw + e;
                        gz[i1] += ga[i1] * sd;
                        g_s += ga[i1] * z[i1];
                    }
                    gz[e] = (g_a - two * a * g_s) * sd;
                }
            }

            let slot = slots[l];
            let gb = g_pre.slice(s![0..n, ..]).sum_axis(Axis(0));
            grad.slice_mut(s![slot.bias..slot.bias + slot.fan_out]).assign(&gb);
            if l == 0 {
                let mut gw = self.input.t().dot(&g_pre.slice(s![0..n, ..]));
                for (p, &c) in plan.dirs.iter().enumerate() {
                    let b = plan.first_block(p);
                    let col = g_pre.slice(s![b * n..(b + 1) * n, ..]).sum_axis(Axis(0));
                    let mut row = gw.row_mut(c);
                    row += &col;
                }
                grad.slice_mut(s![slot.weight..slot.weight + slot.fan_in * slot.fan_out])
                    .assign(&Array1::from_iter(gw.iter().copied()));
            } else {
                let prev = &self.act[l - 1];
                let gw = prev.t().dot(&g_pre);
                grad.slice_mut(s![slot.weight..slot.weight + slot.fan_in * slot.fan_out])
                    .assign(&Array1::from_iter(gw.iter().copied()));
                g_act = g_pre.dot(&net.weights(l).t());
            }
        }
        grad
    }

    /// Value and derivatives recorded by the forward pass.
    pub fn jets(&self, net: &Mlp<T>) -> PointJets<T> {
        let (out, _) = forward(net, self.input.view(), &self.plan, false);
        self.plan.unpack(out.view(), self.n)
    }
}

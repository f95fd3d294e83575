//! A small reverse-mode autodiff tape.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s in
//! evaluation order, so `backward` is a single reverse sweep. Nodes created
//! with [`Graph::constant`] (and anything computed only from constants) are
//! excluded from gradient propagation.

use alloc::vec;
use alloc::vec::Vec;

use crate::kernels;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    ConvT2d { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    Prelu { x: Var, slope: Var },
    LeakyRelu { x: Var, slope: f64 },
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    MaxPool2 { x: Var, argmax: Vec<usize> },
    GlobalAvgPool(Var),
    Linear { x: Var, w: Var, b: Var },
    Sigmoid(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    NegLog(Var),
    MeanSquaredDiff(Var, Var),
    MeanAbsDiff(Var, Var),
    TotalVariation(Var),
    WeightedSum(Vec<(Var, f64)>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` did not
    /// influence the loss.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// A leaf that gradients flow into.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A leaf excluded from gradient propagation.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let out = kernels::conv2d(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            stride,
            pad,
        );
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        self.push(out, Op::Conv2d { x, w, b, stride, pad }, ng)
    }

    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let out = kernels::conv_transpose2d(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            stride,
            pad,
        );
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        self.push(out, Op::ConvT2d { x, w, b, stride, pad }, ng)
    }

    /// Parametric ReLU with a single learnable negative slope.
    pub fn prelu(&mut self, x: Var, slope: Var) -> Var {
        let a = self.value(slope).item();
        let out = self.value(x).map(|v| if v > 0.0 { v } else { a * v });
        let ng = self.ng(x) || self.ng(slope);
        self.push(out, Op::Prelu { x, slope }, ng)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        let ng = self.ng(x);
        self.push(out, Op::LeakyRelu { x, slope }, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        let ng = self.ng(x);
        self.push(out, Op::Relu(x), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.scale_add_assign(-1.0, self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Sub(a, b), ng)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let out = self.value(x).map(|v| k * v);
        let ng = self.ng(x);
        self.push(out, Op::Scale(x, k), ng)
    }

    /// Channel-axis concatenation of `[c_i, h, w]` tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let vals: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_channels(&vals);
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(out, Op::Concat(parts.to_vec()), ng)
    }

    pub fn max_pool2(&mut self, x: Var) -> Var {
        let (out, argmax) = kernels::max_pool2(self.value(x));
        let ng = self.ng(x);
        self.push(out, Op::MaxPool2 { x, argmax }, ng)
    }

    /// `[c, h, w]` → `[c]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let (c, h, w) = self.value(x).chw();
        let n = (h * w) as f64;
        let data = (0..c)
            .map(|ch| self.value(x).plane(ch).iter().sum::<f64>() / n)
            .collect();
        let ng = self.ng(x);
        self.push(Tensor::from_vec(&[c], data), Op::GlobalAvgPool(x), ng)
    }

    /// `w: [m, n]`, `x: [n]`, `b: [m]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (wv, xv, bv) = (self.value(w), self.value(x), self.value(b));
        let (m, n) = (wv.shape()[0], wv.shape()[1]);
        assert_eq!(xv.len(), n, "linear input width mismatch");
        let data = (0..m)
            .map(|i| {
                let row = &wv.data()[i * n..(i + 1) * n];
                bv.data()[i] + row.iter().zip(xv.data()).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(Tensor::from_vec(&[m], data), Op::Linear { x, w, b }, ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let ng = self.ng(x);
        self.push(out, Op::Sigmoid(x), ng)
    }

    /// Elementwise clamp; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        let ng = self.ng(x);
        self.push(out, Op::Clamp { x, lo, hi }, ng)
    }

    /// Elementwise `-ln(x)`.
    pub fn neg_log(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| -libm::log(v));
        let ng = self.ng(x);
        self.push(out, Op::NegLog(x), ng)
    }

    /// Scalar mean of `(a - b)^2` over every element.
    pub fn mean_squared_diff(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mean_squared_diff shape mismatch");
        let s: f64 = av.data().iter().zip(bv.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        let out = Tensor::scalar(s / av.len() as f64);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MeanSquaredDiff(a, b), ng)
    }

    /// Scalar mean of `|a - b|` over every element.
    pub fn mean_abs_diff(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mean_abs_diff shape mismatch");
        let s: f64 = av.data().iter().zip(bv.data()).map(|(x, y)| libm::fabs(x - y)).sum();
        let out = Tensor::scalar(s / av.len() as f64);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MeanAbsDiff(a, b), ng)
    }

    /// Isotropic total variation of a `[c, h, w]` tensor, normalized by
    /// `h * w`; see [`crate::losses::tv_loss`].
    pub fn total_variation(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(tv_value(self.value(x)));
        let ng = self.ng(x);
        self.push(out, Op::TotalVariation(x), ng)
    }

    /// `Σ k_i · x_i` over scalar vars.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let s = terms.iter().map(|&(v, k)| k * self.value(v).item()).sum();
        let ng = terms.iter().any(|&(v, _)| self.ng(v));
        self.push(Tensor::scalar(s), Op::WeightedSum(terms.to_vec()), ng)
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, t: Tensor| {
            if !self.ng(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, stride, pad } => {
                let (gx, gw, gb) =
                    kernels::conv2d_backward(self.value(*x), self.value(*w), g, *stride, *pad);
                acc(*x, gx);
                acc(*w, gw);
                if let Some(b) = b {
                    acc(*b, gb);
                }
            }
            Op::ConvT2d { x, w, b, stride, pad } => {
                let (gx, gw, gb) = kernels::conv_transpose2d_backward(
                    self.value(*x),
                    self.value(*w),
                    g,
                    *stride,
                    *pad,
                );
                acc(*x, gx);
                acc(*w, gw);
                if let Some(b) = b {
                    acc(*b, gb);
                }
            }
            Op::Prelu { x, slope } => {
                let a = self.value(*slope).item();
                let xv = self.value(*x);
                let mut gx = g.clone();
                let mut ga = 0.0;
                for ((gxi, &xi), &gi) in gx.data_mut().iter_mut().zip(xv.data()).zip(g.data()) {
                    if xi <= 0.0 {
                        *gxi = a * gi;
                        ga += xi * gi;
                    }
                }
                acc(*x, gx);
                acc(*slope, Tensor::scalar(ga));
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x);
                let mut gx = g.clone();
                for (gxi, &xi) in gx.data_mut().iter_mut().zip(xv.data()) {
                    if xi <= 0.0 {
                        *gxi *= slope;
                    }
                }
                acc(*x, gx);
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let mut gx = g.clone();
                for (gxi, &xi) in gx.data_mut().iter_mut().zip(xv.data()) {
                    if xi <= 0.0 {
                        *gxi = 0.0;
                    }
                }
                acc(*x, gx);
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Scale(x, k) => acc(*x, g.map(|v| k * v)),
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let shape = self.value(p).shape().to_vec();
                    let n = self.value(p).len();
                    acc(p, Tensor::from_vec(&shape, g.data()[off..off + n].to_vec()));
                    off += n;
                }
            }
            Op::MaxPool2 { x, argmax } => {
                let mut gx = Tensor::zeros(self.value(*x).shape());
                for (&src, &gi) in argmax.iter().zip(g.data()) {
                    gx.data_mut()[src] += gi;
                }
                acc(*x, gx);
            }
            Op::GlobalAvgPool(x) => {
                let xv = self.value(*x);
                let (c, h, w) = xv.chw();
                let n = (h * w) as f64;
                let mut gx = Tensor::zeros(xv.shape());
                for ch in 0..c {
                    let gv = g.data()[ch] / n;
                    gx.data_mut()[ch * h * w..(ch + 1) * h * w].fill(gv);
                }
                acc(*x, gx);
            }
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (m, n) = (wv.shape()[0], wv.shape()[1]);
                let mut gx = Tensor::zeros(xv.shape());
                let mut gw = Tensor::zeros(wv.shape());
                for i in 0..m {
                    let gi = g.data()[i];
                    for j in 0..n {
                        gx.data_mut()[j] += gi * wv.data()[i * n + j];
                        gw.data_mut()[i * n + j] = gi * xv.data()[j];
                    }
                }
                acc(*x, gx);
                acc(*w, gw);
                acc(*b, g.clone());
            }
            Op::Sigmoid(x) => {
                let mut gx = g.clone();
                for (gxi, &s) in gx.data_mut().iter_mut().zip(out.data()) {
                    *gxi *= s * (1.0 - s);
                }
                acc(*x, gx);
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x);
                let mut gx = g.clone();
                for (gxi, &xi) in gx.data_mut().iter_mut().zip(xv.data()) {
                    if xi < *lo || xi > *hi {
                        *gxi = 0.0;
                    }
                }
                acc(*x, gx);
            }
            Op::NegLog(x) => {
                let xv = self.value(*x);
                let mut gx = g.clone();
                for (gxi, &xi) in gx.data_mut().iter_mut().zip(xv.data()) {
                    *gxi *= -1.0 / xi;
                }
                acc(*x, gx);
            }
            Op::MeanSquaredDiff(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let k = 2.0 * g.item() / av.len() as f64;
                let d = Tensor::from_vec(
                    av.shape(),
                    av.data().iter().zip(bv.data()).map(|(x, y)| k * (x - y)).collect(),
                );
                acc(*b, d.map(|v| -v));
                acc(*a, d);
            }
            Op::MeanAbsDiff(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let k = g.item() / av.len() as f64;
                let d = Tensor::from_vec(
                    av.shape(),
                    av.data()
                        .iter()
                        .zip(bv.data())
                        .map(|(x, y)| k * sign(x - y))
                        .collect(),
                );
                acc(*b, d.map(|v| -v));
                acc(*a, d);
            }
            Op::TotalVariation(x) => acc(*x, tv_grad(self.value(*x), g.item())),
            Op::WeightedSum(terms) => {
                for &(v, k) in terms {
                    acc(v, Tensor::scalar(k * g.item()));
                }
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + libm::exp(-v))
    } else {
        let e = libm::exp(v);
        e / (1.0 + e)
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Forward differences at `(y, x)`; zero past the last row/column.
#[inline]
fn tv_diffs(plane: &[f64], h: usize, w: usize, y: usize, x: usize) -> (f64, f64) {
    let v = plane[y * w + x];
    let dv = if y + 1 < h { plane[(y + 1) * w + x] - v } else { 0.0 };
    let dh = if x + 1 < w { plane[y * w + x + 1] - v } else { 0.0 };
    (dv, dh)
}

pub(crate) fn tv_value(t: &Tensor) -> f64 {
    let (c, h, w) = t.chw();
    let mut s = 0.0;
    for ch in 0..c {
        let plane = t.plane(ch);
        for y in 0..h {
            for x in 0..w {
                let (dv, dh) = tv_diffs(plane, h, w, y, x);
                s += libm::sqrt(dv * dv + dh * dh);
            }
        }
    }
    s / (h * w) as f64
}

fn tv_grad(t: &Tensor, upstream: f64) -> Tensor {
    let (c, h, w) = t.chw();
    let k = upstream / (h * w) as f64;
    let mut g = Tensor::zeros(t.shape());
    for ch in 0..c {
        let plane = t.plane(ch);
        let base = ch * h * w;
        for y in 0..h {
            for x in 0..w {
                let (dv, dh) = tv_diffs(plane, h, w, y, x);
                let mag = libm::sqrt(dv * dv + dh * dh);
                // subgradient 0 at a flat point
                if mag == 0.0 {
                    continue;
                }
                let gd = g.data_mut();
                let (gv, gh) = (k * dv / mag, k * dh / mag);
                gd[base + y * w + x] -= gv + gh;
                if y + 1 < h {
                    gd[base + (y + 1) * w + x] += gv;
                }
                if x + 1 < w {
                    gd[base + y * w + x + 1] += gh;
                }
            }
        }
    }
    g
}

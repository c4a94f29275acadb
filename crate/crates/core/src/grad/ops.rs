//! Forward constructors and backward rules for every tape operation.

use super::{add_into, Node, Op, Tape, Var};
use crate::imaging::{lab_pixel_to_rgb, lab_pixel_to_rgb_jac};
use ndarray::{Array2, ArrayD, Ix1, Ix2, Ix3, IxDyn};

fn same_shape(a: &ArrayD<f64>, b: &ArrayD<f64>, what: &str) {
    assert_eq!(a.shape(), b.shape(), "{what}: shape mismatch");
}

impl Tape {
    pub fn add(&self, a: Var, b: Var) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            same_shape(&nodes[a.0].value, &nodes[b.0].value, "add");
            (
                &nodes[a.0].value + &nodes[b.0].value,
                nodes[a.0].requires_grad || nodes[b.0].requires_grad,
            )
        };
        self.push(value, req, Op::Add(a.0, b.0))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            same_shape(&nodes[a.0].value, &nodes[b.0].value, "sub");
            (
                &nodes[a.0].value - &nodes[b.0].value,
                nodes[a.0].requires_grad || nodes[b.0].requires_grad,
            )
        };
        self.push(value, req, Op::Sub(a.0, b.0))
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            same_shape(&nodes[a.0].value, &nodes[b.0].value, "mul");
            (
                &nodes[a.0].value * &nodes[b.0].value,
                nodes[a.0].requires_grad || nodes[b.0].requires_grad,
            )
        };
        self.push(value, req, Op::Mul(a.0, b.0))
    }

    pub fn div(&self, a: Var, b: Var) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            same_shape(&nodes[a.0].value, &nodes[b.0].value, "div");
            (
                &nodes[a.0].value / &nodes[b.0].value,
                nodes[a.0].requires_grad || nodes[b.0].requires_grad,
            )
        };
        self.push(value, req, Op::Div(a.0, b.0))
    }

    pub fn mul_scalar(&self, a: Var, s: f64) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            (nodes[a.0].value.mapv(|v| v * s), nodes[a.0].requires_grad)
        };
        self.push(value, req, Op::MulScalar(a.0, s))
    }

    pub fn add_scalar(&self, a: Var, s: f64) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            (nodes[a.0].value.mapv(|v| v + s), nodes[a.0].requires_grad)
        };
        self.push(value, req, Op::AddScalar(a.0))
    }

    /// `[m,k] × [k,n] → [m,n]`.
    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            let av = nodes[a.0].value.view().into_dimensionality::<Ix2>().unwrap();
            let bv = nodes[b.0].value.view().into_dimensionality::<Ix2>().unwrap();
            assert_eq!(av.ncols(), bv.nrows(), "matmul: inner dims");
            (
                av.dot(&bv).into_dyn(),
                nodes[a.0].requires_grad || nodes[b.0].requires_grad,
            )
        };
        self.push(value, req, Op::MatMul(a.0, b.0))
    }

    pub fn relu(&self, a: Var) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            (nodes[a.0].value.mapv(|v| v.max(0.0)), nodes[a.0].requires_grad)
        };
        self.push(value, req, Op::Relu(a.0))
    }

    pub fn tanh(&self, a: Var) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            (nodes[a.0].value.mapv(f64::tanh), nodes[a.0].requires_grad)
        };
        self.push(value, req, Op::Tanh(a.0))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            (
                nodes[a.0].value.mapv(|v| 1.0 / (1.0 + (-v).exp())),
                nodes[a.0].requires_grad,
            )
        };
        self.push(value, req, Op::Sigmoid(a.0))
    }

    pub fn sum(&self, a: Var) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            (
                ArrayD::from_elem(IxDyn(&[1]), nodes[a.0].value.sum()),
                nodes[a.0].requires_grad,
            )
        };
        self.push(value, req, Op::Sum(a.0))
    }

    pub fn mean(&self, a: Var) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            let n = nodes[a.0].value.len() as f64;
            (
                ArrayD::from_elem(IxDyn(&[1]), nodes[a.0].value.sum() / n),
                nodes[a.0].requires_grad,
            )
        };
        self.push(value, req, Op::Mean(a.0))
    }

    /// `[C,H,W] → [C]`, spatial average.
    pub fn global_avg_pool(&self, a: Var) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            let v = nodes[a.0].value.view().into_dimensionality::<Ix3>().unwrap();
            let (c, h, w) = v.dim();
            let mut out = ArrayD::zeros(IxDyn(&[c]));
            for ci in 0..c {
                let mut acc = 0.0;
                for y in 0..h {
                    for x in 0..w {
                        acc += v[[ci, y, x]];
                    }
                }
                out[[ci]] = acc / (h * w) as f64;
            }
            (out, nodes[a.0].requires_grad)
        };
        self.push(value, req, Op::GlobalAvgPool(a.0))
    }

    /// 2×2 average pooling with stride 2; odd trailing rows/cols dropped.
    pub fn avg_pool2(&self, a: Var) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            let v = nodes[a.0].value.view().into_dimensionality::<Ix3>().unwrap();
            let (c, h, w) = v.dim();
            let (oh, ow) = (h / 2, w / 2);
            assert!(oh >= 1 && ow >= 1, "avg_pool2: input too small");
            let mut out = ArrayD::zeros(IxDyn(&[c, oh, ow]));
            for ci in 0..c {
                for y in 0..oh {
                    for x in 0..ow {
                        out[[ci, y, x]] = (v[[ci, 2 * y, 2 * x]]
                            + v[[ci, 2 * y, 2 * x + 1]]
                            + v[[ci, 2 * y + 1, 2 * x]]
                            + v[[ci, 2 * y + 1, 2 * x + 1]])
                            / 4.0;
                    }
                }
            }
            (out, nodes[a.0].requires_grad)
        };
        self.push(value, req, Op::AvgPool2(a.0))
    }

    /// 2×2 max pooling with stride 2; ties resolve to the first element in
    /// scan order, keeping the backward routing deterministic.
    pub fn max_pool2(&self, a: Var) -> Var {
        let (value, req, argmax) = {
            let nodes = self.nodes.borrow();
            let v = nodes[a.0].value.view().into_dimensionality::<Ix3>().unwrap();
            let (c, h, w) = v.dim();
            let (oh, ow) = (h / 2, w / 2);
            assert!(oh >= 1 && ow >= 1, "max_pool2: input too small");
            let mut out = ArrayD::zeros(IxDyn(&[c, oh, ow]));
            let mut argmax = Vec::with_capacity(c * oh * ow);
            for ci in 0..c {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let (iy, ix) = (2 * y + dy, 2 * x + dx);
                                let val = v[[ci, iy, ix]];
                                if val > best {
                                    best = val;
                                    best_idx = ci * h * w + iy * w + ix;
                                }
                            }
                        }
                        out[[ci, y, x]] = best;
                        argmax.push(best_idx);
                    }
                }
            }
            (out, nodes[a.0].requires_grad, argmax)
        };
        self.push(value, req, Op::MaxPool2 { input: a.0, argmax })
    }

    /// Nearest-neighbor upsampling of `[C,h,w]` to `[C,out_h,out_w]` with
    /// source index `floor(o·h/out)`.
    pub fn upsample_nearest(&self, a: Var, out_h: usize, out_w: usize) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            let v = nodes[a.0].value.view().into_dimensionality::<Ix3>().unwrap();
            let (c, h, w) = v.dim();
            assert!(out_h >= h && out_w >= w, "upsample_nearest shrinks");
            let mut out = ArrayD::zeros(IxDyn(&[c, out_h, out_w]));
            for ci in 0..c {
                for oy in 0..out_h {
                    let sy = oy * h / out_h;
                    for ox in 0..out_w {
                        let sx = ox * w / out_w;
                        out[[ci, oy, ox]] = v[[ci, sy, sx]];
                    }
                }
            }
            (out, nodes[a.0].requires_grad)
        };
        self.push(value, req, Op::UpsampleNearest { input: a.0 })
    }

    /// Channel concatenation of `[C_i,H,W]` maps.
    pub fn concat_c(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let ids: Vec<usize> = parts.iter().map(|v| v.0).collect();
        let (value, req) = {
            let nodes = self.nodes.borrow();
            let first = nodes[ids[0]].value.view().into_dimensionality::<Ix3>().unwrap();
            let (_, h, w) = first.dim();
            let total_c: usize = ids
                .iter()
                .map(|&i| {
                    let v = nodes[i].value.view().into_dimensionality::<Ix3>().unwrap();
                    assert_eq!((v.dim().1, v.dim().2), (h, w), "concat_c spatial dims");
                    v.dim().0
                })
                .sum();
            let mut out = ArrayD::zeros(IxDyn(&[total_c, h, w]));
            let mut offset = 0;
            for &i in &ids {
                let v = nodes[i].value.view().into_dimensionality::<Ix3>().unwrap();
                for ci in 0..v.dim().0 {
                    for y in 0..h {
                        for x in 0..w {
                            out[[offset + ci, y, x]] = v[[ci, y, x]];
                        }
                    }
                }
                offset += v.dim().0;
            }
            (out, self.any_requires_inner(&nodes, &ids))
        };
        self.push(value, req, Op::ConcatC(ids))
    }

    fn any_requires_inner(&self, nodes: &[Node], ids: &[usize]) -> bool {
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Per-pixel softmax over the channel axis of `[C,H,W]`.
    pub fn softmax_c(&self, a: Var) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            let v = nodes[a.0].value.view().into_dimensionality::<Ix3>().unwrap();
            let (c, h, w) = v.dim();
            let mut out = ArrayD::zeros(IxDyn(&[c, h, w]));
            for y in 0..h {
                for x in 0..w {
                    let mut max = f64::NEG_INFINITY;
                    for ci in 0..c {
                        max = max.max(v[[ci, y, x]]);
                    }
                    let mut denom = 0.0;
                    for ci in 0..c {
                        let e = (v[[ci, y, x]] - max).exp();
                        out[[ci, y, x]] = e;
                        denom += e;
                    }
                    for ci in 0..c {
                        out[[ci, y, x]] /= denom;
                    }
                }
            }
            (out, nodes[a.0].requires_grad)
        };
        self.push(value, req, Op::SoftmaxC(a.0))
    }

    /// Softmax over all entries (spatial attention maps).
    pub fn softmax_all(&self, a: Var) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            let v = &nodes[a.0].value;
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut out = v.mapv(|x| (x - max).exp());
            let denom: f64 = out.sum();
            out.mapv_inplace(|x| x / denom);
            (out, nodes[a.0].requires_grad)
        };
        self.push(value, req, Op::SoftmaxAll(a.0))
    }

    /// Log-softmax of a logit vector.
    pub fn log_softmax_1d(&self, a: Var) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            let v = nodes[a.0].value.view().into_dimensionality::<Ix1>().unwrap();
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            (
                nodes[a.0].value.mapv(|x| x - lse),
                nodes[a.0].requires_grad,
            )
        };
        self.push(value, req, Op::LogSoftmax1d(a.0))
    }

    /// Cross entropy of a logit vector against a class index:
    /// `−log softmax(logits)[target]`.
    pub fn cross_entropy(&self, logits: Var, target: usize) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            let v = nodes[logits.0].value.view().into_dimensionality::<Ix1>().unwrap();
            assert!(target < v.len(), "cross_entropy: target out of range");
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            (
                ArrayD::from_elem(IxDyn(&[1]), lse - v[target]),
                nodes[logits.0].requires_grad,
            )
        };
        self.push(value, req, Op::CrossEntropy { logits: logits.0, target })
    }

    /// Per-channel affine map `x·scale[c] + shift[c]` on `[C,H,W]` maps or
    /// `[C]` vectors; backs preprocessing normalization and evaluation-mode
    /// batch norm.
    pub fn channel_affine(&self, a: Var, scale: &[f64], shift: &[f64]) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            let v = &nodes[a.0].value;
            let c = v.shape()[0];
            assert_eq!(scale.len(), c, "channel_affine: scale length");
            assert_eq!(shift.len(), c, "channel_affine: shift length");
            let spatial: usize = v.shape()[1..].iter().product();
            let mut out = v.clone();
            {
                let os = out.as_slice_mut().unwrap();
                for ci in 0..c {
                    for p in 0..spatial {
                        os[ci * spatial + p] = os[ci * spatial + p] * scale[ci] + shift[ci];
                    }
                }
            }
            (out, nodes[a.0].requires_grad)
        };
        self.push(value, req, Op::ChannelAffine { input: a.0, scale: scale.to_vec() })
    }

    /// `weight [out,in] · input [in] (+ bias [out]) → [out]`.
    pub fn linear_vec(&self, input: Var, weight: Var, bias: Option<Var>) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            let x = nodes[input.0].value.view().into_dimensionality::<Ix1>().unwrap();
            let w = nodes[weight.0].value.view().into_dimensionality::<Ix2>().unwrap();
            assert_eq!(w.ncols(), x.len(), "linear_vec dims");
            let mut out = ArrayD::zeros(IxDyn(&[w.nrows()]));
            for o in 0..w.nrows() {
                let mut acc = 0.0;
                for i in 0..x.len() {
                    acc += w[[o, i]] * x[i];
                }
                out[[o]] = acc;
            }
            if let Some(b) = bias {
                let bv = nodes[b.0].value.view().into_dimensionality::<Ix1>().unwrap();
                assert_eq!(bv.len(), w.nrows(), "linear_vec bias");
                for o in 0..w.nrows() {
                    out[[o]] += bv[o];
                }
            }
            let mut req = nodes[input.0].requires_grad || nodes[weight.0].requires_grad;
            if let Some(b) = bias {
                req |= nodes[b.0].requires_grad;
            }
            (out, req)
        };
        self.push(
            value,
            req,
            Op::LinearVec { input: input.0, weight: weight.0, bias: bias.map(|b| b.0) },
        )
    }

    /// Broadcasts a `[C]` vector to a constant `[C,H,W]` map.
    pub fn broadcast_c(&self, a: Var, out_h: usize, out_w: usize) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            let v = nodes[a.0].value.view().into_dimensionality::<Ix1>().unwrap();
            let mut out = ArrayD::zeros(IxDyn(&[v.len(), out_h, out_w]));
            for ci in 0..v.len() {
                for y in 0..out_h {
                    for x in 0..out_w {
                        out[[ci, y, x]] = v[ci];
                    }
                }
            }
            (out, nodes[a.0].requires_grad)
        };
        self.push(value, req, Op::BroadcastC { input: a.0, out_h, out_w })
    }

    /// CIELAB→sRGB with a fixed L channel: `ab [2,H,W]` (AB units) →
    /// `rgb [3,H,W]` clamped into `[0,1]`. The forward values match
    /// [`crate::imaging::lab_to_rgb`] exactly; the backward pass uses the
    /// analytic Jacobian with zero gradient where the gamut clamp is active.
    pub fn lab_to_rgb(&self, ab: Var, l: &Array2<f64>) -> Var {
        let (value, req) = {
            let nodes = self.nodes.borrow();
            let v = nodes[ab.0].value.view().into_dimensionality::<Ix3>().unwrap();
            let (c, h, w) = v.dim();
            assert_eq!(c, 2, "lab_to_rgb expects [2,H,W]");
            assert_eq!((h, w), l.dim(), "lab_to_rgb: L dims");
            let mut out = ArrayD::zeros(IxDyn(&[3, h, w]));
            for y in 0..h {
                for x in 0..w {
                    let rgb = lab_pixel_to_rgb(l[[y, x]], v[[0, y, x]], v[[1, y, x]]);
                    for ci in 0..3 {
                        out[[ci, y, x]] = rgb[ci];
                    }
                }
            }
            (out, nodes[ab.0].requires_grad)
        };
        self.push(value, req, Op::LabToRgb { ab: ab.0, l: l.clone() })
    }

    pub(crate) fn accumulate_parents(
        &self,
        nodes: &[Node],
        idx: usize,
        g: &ArrayD<f64>,
        grads: &mut [Option<ArrayD<f64>>],
    ) {
        let needs = |i: usize| nodes[i].requires_grad;
        match &nodes[idx].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if needs(*a) {
                    add_into(&mut grads[*a], g.clone());
                }
                if needs(*b) {
                    add_into(&mut grads[*b], g.clone());
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    add_into(&mut grads[*a], g.clone());
                }
                if needs(*b) {
                    add_into(&mut grads[*b], g.mapv(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    add_into(&mut grads[*a], g * &nodes[*b].value);
                }
                if needs(*b) {
                    add_into(&mut grads[*b], g * &nodes[*a].value);
                }
            }
            Op::Div(a, b) => {
                if needs(*a) {
                    add_into(&mut grads[*a], g / &nodes[*b].value);
                }
                if needs(*b) {
                    let d = g * &nodes[*a].value / &(&nodes[*b].value * &nodes[*b].value);
                    add_into(&mut grads[*b], d.mapv(|v| -v));
                }
            }
            Op::MulScalar(a, s) => {
                if needs(*a) {
                    add_into(&mut grads[*a], g.mapv(|v| v * s));
                }
            }
            Op::AddScalar(a) => {
                if needs(*a) {
                    add_into(&mut grads[*a], g.clone());
                }
            }
            Op::MatMul(a, b) => {
                let av = nodes[*a].value.view().into_dimensionality::<Ix2>().unwrap();
                let bv = nodes[*b].value.view().into_dimensionality::<Ix2>().unwrap();
                let gv = g.view().into_dimensionality::<Ix2>().unwrap();
                if needs(*a) {
                    add_into(&mut grads[*a], gv.dot(&bv.t()).into_dyn());
                }
                if needs(*b) {
                    add_into(&mut grads[*b], av.t().dot(&gv).into_dyn());
                }
            }
            Op::Conv2d { input, weight, bias, stride, pad, dilation } => {
                self.conv2d_backward(
                    nodes, g, *input, *weight, *bias, *stride, *pad, *dilation, grads,
                );
            }
            Op::Relu(a) => {
                if needs(*a) {
                    let mask = nodes[*a].value.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    add_into(&mut grads[*a], g * &mask);
                }
            }
            Op::Tanh(a) => {
                if needs(*a) {
                    let d = nodes[idx].value.mapv(|y| 1.0 - y * y);
                    add_into(&mut grads[*a], g * &d);
                }
            }
            Op::Sigmoid(a) => {
                if needs(*a) {
                    let d = nodes[idx].value.mapv(|y| y * (1.0 - y));
                    add_into(&mut grads[*a], g * &d);
                }
            }
            Op::Sum(a) => {
                if needs(*a) {
                    let gs = g[[0]];
                    add_into(
                        &mut grads[*a],
                        ArrayD::from_elem(IxDyn(nodes[*a].value.shape()), gs),
                    );
                }
            }
            Op::Mean(a) => {
                if needs(*a) {
                    let n = nodes[*a].value.len() as f64;
                    let gs = g[[0]] / n;
                    add_into(
                        &mut grads[*a],
                        ArrayD::from_elem(IxDyn(nodes[*a].value.shape()), gs),
                    );
                }
            }
            Op::GlobalAvgPool(a) => {
                if needs(*a) {
                    let v = nodes[*a].value.view().into_dimensionality::<Ix3>().unwrap();
                    let (c, h, w) = v.dim();
                    let mut d = ArrayD::zeros(IxDyn(&[c, h, w]));
                    for ci in 0..c {
                        let gs = g[[ci]] / (h * w) as f64;
                        for y in 0..h {
                            for x in 0..w {
                                d[[ci, y, x]] = gs;
                            }
                        }
                    }
                    add_into(&mut grads[*a], d);
                }
            }
            Op::AvgPool2(a) => {
                if needs(*a) {
                    let v = nodes[*a].value.view().into_dimensionality::<Ix3>().unwrap();
                    let (c, h, w) = v.dim();
                    let gv = g.view().into_dimensionality::<Ix3>().unwrap();
                    let (_, oh, ow) = gv.dim();
                    let mut d = ArrayD::zeros(IxDyn(&[c, h, w]));
                    for ci in 0..c {
                        for y in 0..oh {
                            for x in 0..ow {
                                let gs = gv[[ci, y, x]] / 4.0;
                                d[[ci, 2 * y, 2 * x]] += gs;
                                d[[ci, 2 * y, 2 * x + 1]] += gs;
                                d[[ci, 2 * y + 1, 2 * x]] += gs;
                                d[[ci, 2 * y + 1, 2 * x + 1]] += gs;
                            }
                        }
                    }
                    add_into(&mut grads[*a], d);
                }
            }
            Op::MaxPool2 { input, argmax } => {
                if needs(*input) {
                    let mut d = ArrayD::zeros(IxDyn(nodes[*input].value.shape()));
                    let ds = d.as_slice_mut().unwrap();
                    for (out_i, &in_i) in argmax.iter().enumerate() {
                        ds[in_i] += g.as_slice().unwrap()[out_i];
                    }
                    add_into(&mut grads[*input], d);
                }
            }
            Op::UpsampleNearest { input } => {
                if needs(*input) {
                    let v = nodes[*input].value.view().into_dimensionality::<Ix3>().unwrap();
                    let (c, h, w) = v.dim();
                    let gv = g.view().into_dimensionality::<Ix3>().unwrap();
                    let (_, oh, ow) = gv.dim();
                    let mut d = ArrayD::zeros(IxDyn(&[c, h, w]));
                    for ci in 0..c {
                        for oy in 0..oh {
                            let sy = oy * h / oh;
                            for ox in 0..ow {
                                let sx = ox * w / ow;
                                d[[ci, sy, sx]] += gv[[ci, oy, ox]];
                            }
                        }
                    }
                    add_into(&mut grads[*input], d);
                }
            }
            Op::ConcatC(ids) => {
                let gv = g.view().into_dimensionality::<Ix3>().unwrap();
                let (_, h, w) = gv.dim();
                let mut offset = 0;
                for &i in ids {
                    let ci = nodes[i].value.shape()[0];
                    if needs(i) {
                        let mut d = ArrayD::zeros(IxDyn(&[ci, h, w]));
                        for cc in 0..ci {
                            for y in 0..h {
                                for x in 0..w {
                                    d[[cc, y, x]] = gv[[offset + cc, y, x]];
                                }
                            }
                        }
                        add_into(&mut grads[i], d);
                    }
                    offset += ci;
                }
            }
            Op::SoftmaxC(a) => {
                if needs(*a) {
                    let s = nodes[idx].value.view().into_dimensionality::<Ix3>().unwrap();
                    let gv = g.view().into_dimensionality::<Ix3>().unwrap();
                    let (c, h, w) = s.dim();
                    let mut d = ArrayD::zeros(IxDyn(&[c, h, w]));
                    for y in 0..h {
                        for x in 0..w {
                            let mut dot = 0.0;
                            for ci in 0..c {
                                dot += gv[[ci, y, x]] * s[[ci, y, x]];
                            }
                            for ci in 0..c {
                                d[[ci, y, x]] = s[[ci, y, x]] * (gv[[ci, y, x]] - dot);
                            }
                        }
                    }
                    add_into(&mut grads[*a], d);
                }
            }
            Op::SoftmaxAll(a) => {
                if needs(*a) {
                    let s = &nodes[idx].value;
                    let dot: f64 = s.iter().zip(g.iter()).map(|(si, gi)| si * gi).sum();
                    let d = ndarray::Zip::from(s)
                        .and(g)
                        .map_collect(|&si, &gi| si * (gi - dot));
                    add_into(&mut grads[*a], d);
                }
            }
            Op::LogSoftmax1d(a) => {
                if needs(*a) {
                    let y = &nodes[idx].value;
                    let gsum: f64 = g.sum();
                    let d = ndarray::Zip::from(y)
                        .and(g)
                        .map_collect(|&yi, &gi| gi - yi.exp() * gsum);
                    add_into(&mut grads[*a], d);
                }
            }
            Op::CrossEntropy { logits, target } => {
                if needs(*logits) {
                    let v = nodes[*logits].value.view().into_dimensionality::<Ix1>().unwrap();
                    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let denom: f64 = v.iter().map(|x| (x - max).exp()).sum();
                    let gs = g[[0]];
                    let mut d = ArrayD::zeros(IxDyn(&[v.len()]));
                    for i in 0..v.len() {
                        let soft = (v[i] - max).exp() / denom;
                        d[[i]] = gs * (soft - if i == *target { 1.0 } else { 0.0 });
                    }
                    add_into(&mut grads[*logits], d);
                }
            }
            Op::ChannelAffine { input, scale } => {
                if needs(*input) {
                    let c = g.shape()[0];
                    let spatial: usize = g.shape()[1..].iter().product();
                    let mut d = g.clone();
                    {
                        let ds = d.as_slice_mut().unwrap();
                        for ci in 0..c {
                            for p in 0..spatial {
                                ds[ci * spatial + p] *= scale[ci];
                            }
                        }
                    }
                    add_into(&mut grads[*input], d);
                }
            }
            Op::LinearVec { input, weight, bias } => {
                let x = nodes[*input].value.view().into_dimensionality::<Ix1>().unwrap();
                let w = nodes[*weight].value.view().into_dimensionality::<Ix2>().unwrap();
                let gv = g.view().into_dimensionality::<Ix1>().unwrap();
                if needs(*input) {
                    let mut d = ArrayD::zeros(IxDyn(&[x.len()]));
                    for o in 0..w.nrows() {
                        for i in 0..x.len() {
                            d[[i]] += gv[o] * w[[o, i]];
                        }
                    }
                    add_into(&mut grads[*input], d);
                }
                if needs(*weight) {
                    let mut d = ArrayD::zeros(IxDyn(&[w.nrows(), w.ncols()]));
                    for o in 0..w.nrows() {
                        for i in 0..x.len() {
                            d[[o, i]] = gv[o] * x[i];
                        }
                    }
                    add_into(&mut grads[*weight], d);
                }
                if let Some(b) = bias {
                    if needs(*b) {
                        add_into(&mut grads[*b], g.clone());
                    }
                }
            }
            Op::BroadcastC { input, out_h, out_w } => {
                if needs(*input) {
                    let gv = g.view().into_dimensionality::<Ix3>().unwrap();
                    let c = nodes[*input].value.len();
                    let mut d = ArrayD::zeros(IxDyn(&[c]));
                    for ci in 0..c {
                        let mut acc = 0.0;
                        for y in 0..*out_h {
                            for x in 0..*out_w {
                                acc += gv[[ci, y, x]];
                            }
                        }
                        d[[ci]] = acc;
                    }
                    add_into(&mut grads[*input], d);
                }
            }
            Op::LabToRgb { ab, l } => {
                if needs(*ab) {
                    let v = nodes[*ab].value.view().into_dimensionality::<Ix3>().unwrap();
                    let gv = g.view().into_dimensionality::<Ix3>().unwrap();
                    let (h, w) = l.dim();
                    let mut d = ArrayD::zeros(IxDyn(&[2, h, w]));
                    for y in 0..h {
                        for x in 0..w {
                            let (_, jac) =
                                lab_pixel_to_rgb_jac(l[[y, x]], v[[0, y, x]], v[[1, y, x]]);
                            let mut da = 0.0;
                            let mut db = 0.0;
                            for ci in 0..3 {
                                da += gv[[ci, y, x]] * jac[ci][0];
                                db += gv[[ci, y, x]] * jac[ci][1];
                            }
                            d[[0, y, x]] = da;
                            d[[1, y, x]] = db;
                        }
                    }
                    add_into(&mut grads[*ab], d);
                }
            }
        }
    }
}

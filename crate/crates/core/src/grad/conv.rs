//! 2-D convolution (cross-correlation) on single `[C,H,W]` images with zero
//! padding, stride and dilation.

use super::{add_into, Node, Op, Tape, Var};
use ndarray::{ArrayD, Ix1, Ix3, Ix4, IxDyn};

pub(crate) fn conv_out_len(n: usize, k: usize, stride: usize, pad: usize, dilation: usize) -> usize {
    let span = (k - 1) * dilation + 1;
    assert!(n + 2 * pad >= span, "conv2d: kernel span exceeds padded input");
    (n + 2 * pad - span) / stride + 1
}

impl Tape {
    /// `input [Cin,H,W]`, `weight [Cout,Cin,kh,kw]`, optional `bias [Cout]`.
    pub fn conv2d(
        &self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
        dilation: usize,
    ) -> Var {
        assert!(stride >= 1 && dilation >= 1);
        let (value, req) = {
            let nodes = self.nodes.borrow();
            let x = nodes[input.0].value.view().into_dimensionality::<Ix3>().unwrap();
            let w = nodes[weight.0].value.view().into_dimensionality::<Ix4>().unwrap();
            let (cin, h, wid) = x.dim();
            let (cout, wcin, kh, kw) = w.dim();
            assert_eq!(cin, wcin, "conv2d: channel mismatch");
            let oh = conv_out_len(h, kh, stride, pad, dilation);
            let ow = conv_out_len(wid, kw, stride, pad, dilation);

            let xs = x.to_slice().unwrap();
            let ws = w.to_slice().unwrap();
            let mut out = ArrayD::zeros(IxDyn(&[cout, oh, ow]));
            {
                let os = out.as_slice_mut().unwrap();
                for oc in 0..cout {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = 0.0;
                            for ic in 0..cin {
                                let xbase = ic * h * wid;
                                let wbase = oc * cin * kh * kw + ic * kh * kw;
                                for ky in 0..kh {
                                    let iy = (oy * stride + ky * dilation) as i64 - pad as i64;
                                    if iy < 0 || iy >= h as i64 {
                                        continue;
                                    }
                                    for kx in 0..kw {
                                        let ix =
                                            (ox * stride + kx * dilation) as i64 - pad as i64;
                                        if ix < 0 || ix >= wid as i64 {
                                            continue;
                                        }
                                        acc += xs[xbase + iy as usize * wid + ix as usize]
                                            * ws[wbase + ky * kw + kx];
                                    }
                                }
                            }
                            os[oc * oh * ow + oy * ow + ox] = acc;
                        }
                    }
                }
            }
            if let Some(b) = bias {
                let bv = nodes[b.0].value.view().into_dimensionality::<Ix1>().unwrap();
                assert_eq!(bv.len(), cout, "conv2d: bias length");
                let os = out.as_slice_mut().unwrap();
                for oc in 0..cout {
                    for p in 0..oh * ow {
                        os[oc * oh * ow + p] += bv[oc];
                    }
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
            Op::Conv2d {
                input: input.0,
                weight: weight.0,
                bias: bias.map(|b| b.0),
                stride,
                pad,
                dilation,
            },
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn conv2d_backward(
        &self,
        nodes: &[Node],
        g: &ArrayD<f64>,
        input: usize,
        weight: usize,
        bias: Option<usize>,
        stride: usize,
        pad: usize,
        dilation: usize,
        grads: &mut [Option<ArrayD<f64>>],
    ) {
        let x = nodes[input].value.view().into_dimensionality::<Ix3>().unwrap();
        let w = nodes[weight].value.view().into_dimensionality::<Ix4>().unwrap();
        let gv = g.view().into_dimensionality::<Ix3>().unwrap();
        let (cin, h, wid) = x.dim();
        let (cout, _, kh, kw) = w.dim();
        let (_, oh, ow) = gv.dim();

        let xs = x.to_slice().unwrap();
        let ws = w.to_slice().unwrap();
        let gs = gv.to_slice().unwrap();

        let need_in = nodes[input].requires_grad;
        let need_w = nodes[weight].requires_grad;
        let mut d_in = if need_in { Some(vec![0.0; cin * h * wid]) } else { None };
        let mut d_w = if need_w { Some(vec![0.0; cout * cin * kh * kw]) } else { None };

        for oc in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let go = gs[oc * oh * ow + oy * ow + ox];
                    if go == 0.0 {
                        continue;
                    }
                    for ic in 0..cin {
                        let xbase = ic * h * wid;
                        let wbase = oc * cin * kh * kw + ic * kh * kw;
                        for ky in 0..kh {
                            let iy = (oy * stride + ky * dilation) as i64 - pad as i64;
                            if iy < 0 || iy >= h as i64 {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx * dilation) as i64 - pad as i64;
                                if ix < 0 || ix >= wid as i64 {
                                    continue;
                                }
                                let xi = xbase + iy as usize * wid + ix as usize;
                                let wi = wbase + ky * kw + kx;
                                if let Some(d) = d_in.as_mut() {
                                    d[xi] += go * ws[wi];
                                }
                                if let Some(d) = d_w.as_mut() {
                                    d[wi] += go * xs[xi];
                                }
                            }
                        }
                    }
                }
            }
        }

        if let Some(d) = d_in {
            add_into(
                &mut grads[input],
                ArrayD::from_shape_vec(IxDyn(&[cin, h, wid]), d).unwrap(),
            );
        }
        if let Some(d) = d_w {
            add_into(
                &mut grads[weight],
                ArrayD::from_shape_vec(IxDyn(&[cout, cin, kh, kw]), d).unwrap(),
            );
        }
        if let Some(b) = bias {
            if nodes[b].requires_grad {
                let mut d = ArrayD::zeros(IxDyn(&[cout]));
                for oc in 0..cout {
                    let mut acc = 0.0;
                    for p in 0..oh * ow {
                        acc += gs[oc * oh * ow + p];
                    }
                    d[[oc]] = acc;
                }
                add_into(&mut grads[b], d);
            }
        }
    }
}

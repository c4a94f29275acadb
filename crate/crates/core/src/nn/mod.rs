//! Network building blocks evaluated on the autodiff tape, plus the
//! serializable definitions the model registry loads from weight files.

use crate::grad::{Tape, Var};
use ndarray::{ArrayD, IxDyn};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A single feed-forward stage. Convolutional stages operate on `[C,H,W]`
/// maps; `Linear` operates on `[C]` vectors (usually after `GlobalAvgPool`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Layer {
    Conv {
        weight: ArrayD<f64>,
        bias: ArrayD<f64>,
        stride: usize,
        pad: usize,
        dilation: usize,
    },
    Relu,
    Tanh,
    Sigmoid,
    AvgPool2,
    MaxPool2,
    GlobalAvgPool,
    /// Nearest-neighbor upsampling by an integer factor.
    Upsample2 {
        factor: usize,
    },
    /// Per-channel `x·scale + shift`; also covers evaluation-mode batch norm.
    ChannelAffine {
        scale: Vec<f64>,
        shift: Vec<f64>,
    },
    Linear {
        weight: ArrayD<f64>,
        bias: ArrayD<f64>,
    },
}

impl Layer {
    fn param_count(&self) -> usize {
        match self {
            Layer::Conv { .. } | Layer::Linear { .. } => 2,
            _ => 0,
        }
    }
}

/// A sequential network with optional named taps (features captured after
/// the given layer index).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConvNet {
    pub layers: Vec<Layer>,
    pub taps: Vec<(String, usize)>,
}

/// Result of running a [`ConvNet`] on the tape.
pub struct ForwardOutput {
    pub output: Var,
    pub taps: Vec<(String, Var)>,
}

impl ConvNet {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers, taps: Vec::new() }
    }

    pub fn with_taps(layers: Vec<Layer>, taps: Vec<(String, usize)>) -> Self {
        Self { layers, taps }
    }

    /// Runs the network. When `params` is `Some`, parameter tensors are read
    /// from those pre-bound tape variables (in [`Self::bind_params`] order)
    /// instead of being inserted as constants; that is how attacks obtain
    /// gradients with respect to the weights.
    pub fn forward(&self, tape: &Tape, input: Var, params: Option<&[Var]>) -> ForwardOutput {
        let mut cursor = 0usize;
        let mut next_param = |tape: &Tape, arr: &ArrayD<f64>| -> Var {
            match params {
                Some(vars) => {
                    let v = vars[cursor];
                    cursor += 1;
                    v
                }
                None => tape.constant(arr.clone()),
            }
        };
        let mut x = input;
        let mut taps = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            x = match layer {
                Layer::Conv { weight, bias, stride, pad, dilation } => {
                    let w = next_param(tape, weight);
                    let b = next_param(tape, bias);
                    tape.conv2d(x, w, Some(b), *stride, *pad, *dilation)
                }
                Layer::Relu => tape.relu(x),
                Layer::Tanh => tape.tanh(x),
                Layer::Sigmoid => tape.sigmoid(x),
                Layer::AvgPool2 => tape.avg_pool2(x),
                Layer::MaxPool2 => tape.max_pool2(x),
                Layer::GlobalAvgPool => tape.global_avg_pool(x),
                Layer::Upsample2 { factor } => {
                    let shape = tape.shape(x);
                    tape.upsample_nearest(x, shape[1] * factor, shape[2] * factor)
                }
                Layer::ChannelAffine { scale, shift } => tape.channel_affine(x, scale, shift),
                Layer::Linear { weight, bias } => {
                    let w = next_param(tape, weight);
                    let b = next_param(tape, bias);
                    tape.linear_vec(x, w, Some(b))
                }
            };
            for (name, at) in &self.taps {
                if *at == i {
                    taps.push((name.clone(), x));
                }
            }
        }
        ForwardOutput { output: x, taps }
    }

    /// Parameter tensors in forward order (conv/linear weight then bias).
    pub fn param_arrays(&self) -> Vec<&ArrayD<f64>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv { weight, bias, .. } | Layer::Linear { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Inserts every parameter on the tape, as leaves when `requires_grad`.
    pub fn bind_params(&self, tape: &Tape, requires_grad: bool) -> Vec<Var> {
        self.param_arrays()
            .into_iter()
            .map(|a| {
                if requires_grad {
                    tape.leaf(a.clone())
                } else {
                    tape.constant(a.clone())
                }
            })
            .collect()
    }

    /// Overwrites parameters from `values` (in [`Self::param_arrays`] order).
    pub fn set_param_arrays(&mut self, values: &[ArrayD<f64>]) {
        let mut i = 0;
        for layer in &mut self.layers {
            match layer {
                Layer::Conv { weight, bias, .. } | Layer::Linear { weight, bias } => {
                    *weight = values[i].clone();
                    *bias = values[i + 1].clone();
                    i += 2;
                }
                _ => {}
            }
        }
        assert_eq!(i, values.len(), "parameter count mismatch");
    }
}

/// Xavier-uniform conv weight `[cout, cin, k, k]`.
pub fn conv_xavier(rng: &mut ChaCha8Rng, cout: usize, cin: usize, k: usize) -> ArrayD<f64> {
    let bound = (6.0 / ((cin + cout) * k * k) as f64).sqrt();
    let mut w = ArrayD::zeros(IxDyn(&[cout, cin, k, k]));
    w.mapv_inplace(|_| rng.random::<f64>() * 2.0 * bound - bound);
    w
}

pub fn zeros1(n: usize) -> ArrayD<f64> {
    ArrayD::zeros(IxDyn(&[n]))
}

/// Conv layer whose output channels are given explicitly as
/// `(per-input-channel mix, 3×3 kernel)` outer products.
pub fn conv_from_kernels(
    kernels: &[(Vec<f64>, [[f64; 3]; 3])],
    cin: usize,
    stride: usize,
    pad: usize,
) -> Layer {
    let cout = kernels.len();
    let mut w = ArrayD::zeros(IxDyn(&[cout, cin, 3, 3]));
    for (oc, (mix, k)) in kernels.iter().enumerate() {
        assert_eq!(mix.len(), cin);
        for (ic, &m) in mix.iter().enumerate() {
            for (ky, row) in k.iter().enumerate() {
                for (kx, &v) in row.iter().enumerate() {
                    w[[oc, ic, ky, kx]] = m * v;
                }
            }
        }
    }
    Layer::Conv { weight: w, bias: zeros1(cout), stride, pad, dilation: 1 }
}

/// 1/16 · [1 2 1; 2 4 2; 1 2 1], a normalized smoothing kernel.
pub const KERNEL_SMOOTH: [[f64; 3]; 3] = [
    [1.0 / 16.0, 2.0 / 16.0, 1.0 / 16.0],
    [2.0 / 16.0, 4.0 / 16.0, 2.0 / 16.0],
    [1.0 / 16.0, 2.0 / 16.0, 1.0 / 16.0],
];

pub const KERNEL_BOX: [[f64; 3]; 3] = [[1.0 / 9.0; 3]; 3];

pub const KERNEL_IDENTITY: [[f64; 3]; 3] = [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::Tape;

    fn tiny_net(seed: u64) -> ConvNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ConvNet::with_taps(
            vec![
                Layer::Conv {
                    weight: conv_xavier(&mut rng, 4, 3, 3),
                    bias: zeros1(4),
                    stride: 1,
                    pad: 1,
                    dilation: 1,
                },
                Layer::Relu,
                Layer::AvgPool2,
                Layer::GlobalAvgPool,
                Layer::Linear {
                    weight: {
                        let mut w = ArrayD::zeros(IxDyn(&[2, 4]));
                        w.mapv_inplace(|_| rng.random::<f64>() - 0.5);
                        w
                    },
                    bias: zeros1(2),
                },
            ],
            vec![("feat".into(), 1)],
        )
    }

    #[test]
    fn forward_shapes_and_taps() {
        let net = tiny_net(1);
        let tape = Tape::new();
        let x = tape.constant(ArrayD::zeros(IxDyn(&[3, 8, 8])));
        let out = net.forward(&tape, x, None);
        assert_eq!(tape.shape(out.output), vec![2]);
        assert_eq!(out.taps.len(), 1);
        assert_eq!(tape.shape(out.taps[0].1), vec![4, 8, 8]);
    }

    #[test]
    fn bound_params_round_trip() {
        let mut net = tiny_net(2);
        let arrays: Vec<ArrayD<f64>> = net.param_arrays().into_iter().cloned().collect();
        assert_eq!(arrays.len(), net.param_count());
        net.set_param_arrays(&arrays);

        let tape = Tape::new();
        let x = tape.constant(ArrayD::zeros(IxDyn(&[3, 8, 8])));
        let vars = net.bind_params(&tape, true);
        let out = net.forward(&tape, x, Some(&vars));
        assert_eq!(tape.shape(out.output), vec![2]);
    }

    #[test]
    fn json_round_trip_preserves_output() {
        let net = tiny_net(3);
        let json = serde_json::to_string(&net).unwrap();
        let back: ConvNet = serde_json::from_str(&json).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x0 = ArrayD::zeros(IxDyn(&[3, 8, 8]));
        x0.mapv_inplace(|_| rng.random::<f64>());
        let run = |net: &ConvNet| {
            let tape = Tape::new();
            let x = tape.constant(x0.clone());
            let out = net.forward(&tape, x, None);
            tape.value(out.output)
        };
        assert_eq!(run(&net), run(&back));
    }
}

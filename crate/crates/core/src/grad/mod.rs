//! Reverse-mode automatic differentiation on a per-iteration tape.
//!
//! Attack loops rebuild a fresh [`Tape`] every iteration: leaves are the
//! variables being optimized (hint/mask fields, victim pixels or a copy of
//! network weights), constants are everything else, and [`Tape::backward`]
//! yields gradients with respect to the leaves. All arrays are f64 in
//! standard (C-order) layout; reductions run in a fixed sequential order so
//! identical inputs give bit-identical values and gradients.

mod conv;
mod ops;
pub mod optim;

#[cfg(test)]
mod tests;

pub use optim::{lbfgs_steps, Adam, LbfgsOptions, LbfgsRun, LbfgsStop};

use ndarray::{ArrayD, IxDyn};
use std::cell::RefCell;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    MulScalar(usize, f64),
    AddScalar(usize),
    MatMul(usize, usize),
    Conv2d {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        stride: usize,
        pad: usize,
        dilation: usize,
    },
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Sum(usize),
    Mean(usize),
    GlobalAvgPool(usize),
    AvgPool2(usize),
    MaxPool2 {
        input: usize,
        argmax: Vec<usize>,
    },
    UpsampleNearest {
        input: usize,
    },
    ConcatC(Vec<usize>),
    SoftmaxC(usize),
    SoftmaxAll(usize),
    LogSoftmax1d(usize),
    CrossEntropy {
        logits: usize,
        target: usize,
    },
    ChannelAffine {
        input: usize,
        scale: Vec<f64>,
    },
    LinearVec {
        input: usize,
        weight: usize,
        bias: Option<usize>,
    },
    BroadcastC {
        input: usize,
        out_h: usize,
        out_w: usize,
    },
    LabToRgb {
        ab: usize,
        l: ndarray::Array2<f64>,
    },
}

pub(crate) struct Node {
    pub value: ArrayD<f64>,
    pub requires_grad: bool,
    pub op: Op,
}

/// A recording of differentiable operations.
pub struct Tape {
    pub(crate) nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()) }
    }

    pub(crate) fn push(&self, value: ArrayD<f64>, requires_grad: bool, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, requires_grad, op });
        Var(nodes.len() - 1)
    }

    /// Inserts a differentiable leaf.
    pub fn leaf(&self, value: ArrayD<f64>) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Inserts a non-differentiable constant.
    pub fn constant(&self, value: ArrayD<f64>) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> ArrayD<f64> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    /// Reads a `[1]`-shaped node as a scalar.
    pub fn scalar(&self, v: Var) -> f64 {
        let nodes = self.nodes.borrow();
        debug_assert_eq!(nodes[v.0].value.len(), 1);
        nodes[v.0].value.iter().next().copied().unwrap()
    }

    /// Detached read used by loss normalizers that must not receive
    /// gradient: population standard deviation over all entries.
    pub fn detached_std(&self, v: Var) -> f64 {
        let nodes = self.nodes.borrow();
        let vals = &nodes[v.0].value;
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        var.sqrt()
    }

    /// Runs reverse accumulation from a scalar output.
    pub fn backward(&self, output: Var) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[output.0].value.len(),
            1,
            "backward needs a scalar output"
        );
        let mut grads: Vec<Option<ArrayD<f64>>> = vec![None; nodes.len()];
        grads[output.0] = Some(ArrayD::ones(IxDyn(nodes[output.0].value.shape())));

        for idx in (0..=output.0).rev() {
            if !nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.accumulate_parents(&nodes, idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    /// Gradient of the output with respect to `v`, when `v` participates.
    pub fn wrt(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient, or zeros of the given shape when `v` did not participate.
    pub fn wrt_or_zeros(&self, v: Var, shape: &[usize]) -> ArrayD<f64> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| ArrayD::zeros(IxDyn(shape)))
    }
}

pub(crate) fn add_into(acc: &mut Option<ArrayD<f64>>, delta: ArrayD<f64>) {
    match acc {
        Some(a) => *a += &delta,
        None => *acc = Some(delta),
    }
}

/// Central-difference numerical gradient of a scalar function; the oracle
/// side of every gradient check.
pub fn numerical_grad<F: FnMut(&ArrayD<f64>) -> f64>(
    x: &ArrayD<f64>,
    mut f: F,
    eps: f64,
) -> ArrayD<f64> {
    let mut g = ArrayD::zeros(IxDyn(x.shape()));
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.as_slice().unwrap()[i];
        probe.as_slice_mut().unwrap()[i] = orig + eps;
        let hi = f(&probe);
        probe.as_slice_mut().unwrap()[i] = orig - eps;
        let lo = f(&probe);
        probe.as_slice_mut().unwrap()[i] = orig;
        g.as_slice_mut().unwrap()[i] = (hi - lo) / (2.0 * eps);
    }
    g
}

/// `‖a − b‖∞ / max(1e-12, ‖a‖∞, ‖b‖∞)`.
pub fn grad_rel_error(a: &ArrayD<f64>, b: &ArrayD<f64>) -> f64 {
    let num = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = a
        .iter()
        .chain(b.iter())
        .map(|x| x.abs())
        .fold(1e-12, f64::max);
    num / scale
}

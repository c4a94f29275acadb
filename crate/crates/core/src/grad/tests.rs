//! Finite-difference checks for every tape operation.

use super::*;
use ndarray::{Array2, IxDyn};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> ArrayD<f64> {
    let mut a = ArrayD::zeros(IxDyn(shape));
    a.mapv_inplace(|_| rng.random::<f64>() * 2.0 - 1.0);
    a
}

/// Builds the graph twice: once for the analytic gradient, once per probe
/// for the numerical one.
fn check<F>(x0: &ArrayD<f64>, build: F, tol: f64)
where
    F: Fn(&Tape, Var) -> Var,
{
    let tape = Tape::new();
    let x = tape.leaf(x0.clone());
    let out = build(&tape, x);
    let grads = tape.backward(out);
    let analytic = grads.wrt_or_zeros(x, x0.shape());

    let numeric = numerical_grad(
        x0,
        |probe| {
            let t = Tape::new();
            let v = t.leaf(probe.clone());
            t.scalar(build(&t, v))
        },
        1e-6,
    );
    let err = grad_rel_error(&analytic, &numeric);
    assert!(err < tol, "gradient mismatch: rel err {err}");
}

#[test]
fn elementwise_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x0 = randn(&mut rng, &[3, 4]);
    let c0 = randn(&mut rng, &[3, 4]);
    check(
        &x0,
        |t, x| {
            let c = t.constant(c0.clone());
            let a = t.mul(x, c);
            let b = t.add(a, x);
            let d = t.sub(b, c);
            let e = t.mul_scalar(d, 0.7);
            let f = t.add_scalar(e, 0.3);
            t.sum(f)
        },
        1e-6,
    );
}

#[test]
fn div_and_activations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut x0 = randn(&mut rng, &[12]);
    // Keep relu inputs away from the kink.
    x0.mapv_inplace(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let d0 = randn(&mut rng, &[12]).mapv(|v| v.abs() + 0.5);
    check(
        &x0,
        |t, x| {
            let d = t.constant(d0.clone());
            let q = t.div(x, d);
            let r = t.relu(q);
            let th = t.tanh(r);
            let sg = t.sigmoid(th);
            t.mean(sg)
        },
        1e-5,
    );
}

#[test]
fn matmul_both_sides() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a0 = randn(&mut rng, &[3, 5]);
    let b0 = randn(&mut rng, &[5, 2]);
    check(
        &a0,
        |t, a| {
            let b = t.constant(b0.clone());
            let m = t.matmul(a, b);
            t.sum(m)
        },
        1e-6,
    );
    check(
        &b0,
        |t, b| {
            let a = t.constant(a0.clone());
            let m = t.matmul(a, b);
            let sq = t.mul(m, m);
            t.sum(sq)
        },
        1e-6,
    );
}

#[test]
fn conv2d_input_weight_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x0 = randn(&mut rng, &[2, 6, 5]);
    let w0 = randn(&mut rng, &[3, 2, 3, 3]);
    let b0 = randn(&mut rng, &[3]);
    for (stride, pad, dil) in [(1, 1, 1), (2, 1, 1), (1, 0, 1), (1, 2, 2)] {
        check(
            &x0,
            |t, x| {
                let w = t.constant(w0.clone());
                let b = t.constant(b0.clone());
                let y = t.conv2d(x, w, Some(b), stride, pad, dil);
                let sq = t.mul(y, y);
                t.sum(sq)
            },
            1e-5,
        );
        check(
            &w0,
            |t, w| {
                let x = t.constant(x0.clone());
                let b = t.constant(b0.clone());
                let y = t.conv2d(x, w, Some(b), stride, pad, dil);
                let sq = t.mul(y, y);
                t.sum(sq)
            },
            1e-5,
        );
    }
    check(
        &b0,
        |t, b| {
            let x = t.constant(x0.clone());
            let w = t.constant(w0.clone());
            let y = t.conv2d(x, w, Some(b), 1, 1, 1);
            let sq = t.mul(y, y);
            t.sum(sq)
        },
        1e-6,
    );
}

#[test]
fn pooling_and_upsampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x0 = randn(&mut rng, &[2, 4, 6]);
    check(
        &x0,
        |t, x| {
            let p = t.avg_pool2(x);
            let u = t.upsample_nearest(p, 4, 6);
            let sq = t.mul(u, u);
            t.sum(sq)
        },
        1e-6,
    );
    check(
        &x0,
        |t, x| {
            let g = t.global_avg_pool(x);
            let sq = t.mul(g, g);
            t.sum(sq)
        },
        1e-6,
    );
    // Max pool: keep values well separated so the argmax is stable under
    // probing.
    let mut x1 = randn(&mut rng, &[1, 4, 4]);
    for (i, v) in x1.iter_mut().enumerate() {
        *v += i as f64 * 0.37;
    }
    check(
        &x1,
        |t, x| {
            let p = t.max_pool2(x);
            let sq = t.mul(p, p);
            t.sum(sq)
        },
        1e-6,
    );
}

#[test]
fn concat_softmax_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x0 = randn(&mut rng, &[2, 3, 3]);
    let y0 = randn(&mut rng, &[1, 3, 3]);
    check(
        &x0,
        |t, x| {
            let y = t.constant(y0.clone());
            let c = t.concat_c(&[x, y]);
            let s = t.softmax_c(c);
            let sq = t.mul(s, s);
            t.sum(sq)
        },
        1e-5,
    );
    let l0 = randn(&mut rng, &[7]);
    check(
        &l0,
        |t, l| {
            let ls = t.log_softmax_1d(l);
            let sq = t.mul(ls, ls);
            t.sum(sq)
        },
        1e-5,
    );
    check(&l0, |t, l| t.cross_entropy(l, 3), 1e-6);
    check(
        &x0,
        |t, x| {
            let s = t.softmax_all(x);
            let sq = t.mul(s, s);
            t.sum(sq)
        },
        1e-5,
    );
}

#[test]
fn linear_affine_broadcast() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x0 = randn(&mut rng, &[5]);
    let w0 = randn(&mut rng, &[4, 5]);
    let b0 = randn(&mut rng, &[4]);
    check(
        &x0,
        |t, x| {
            let w = t.constant(w0.clone());
            let b = t.constant(b0.clone());
            let y = t.linear_vec(x, w, Some(b));
            let sq = t.mul(y, y);
            t.sum(sq)
        },
        1e-6,
    );
    check(
        &w0,
        |t, w| {
            let x = t.constant(x0.clone());
            let y = t.linear_vec(x, w, None);
            let sq = t.mul(y, y);
            t.sum(sq)
        },
        1e-6,
    );
    let m0 = randn(&mut rng, &[3, 2, 2]);
    check(
        &m0,
        |t, m| {
            let a = t.channel_affine(m, &[0.5, -1.5, 2.0], &[0.1, 0.0, -0.2]);
            let sq = t.mul(a, a);
            t.sum(sq)
        },
        1e-6,
    );
    let v0 = randn(&mut rng, &[3]);
    check(
        &v0,
        |t, v| {
            let b = t.broadcast_c(v, 4, 5);
            let sq = t.mul(b, b);
            t.sum(sq)
        },
        1e-6,
    );
}

#[test]
fn lab_to_rgb_op_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // Moderate chroma keeps the pixels in gamut, away from the clamp where
    // the analytic derivative is intentionally zero.
    let mut ab0 = ArrayD::zeros(IxDyn(&[2, 3, 3]));
    ab0.mapv_inplace(|_| rng.random::<f64>() * 40.0 - 20.0);
    let l: Array2<f64> = Array2::from_shape_fn((3, 3), |_| rng.random::<f64>() * 50.0 + 25.0);
    check(
        &ab0,
        |t, ab| {
            let rgb = t.lab_to_rgb(ab, &l);
            let sq = t.mul(rgb, rgb);
            t.sum(sq)
        },
        1e-4,
    );
}

#[test]
fn constants_receive_no_gradient() {
    let tape = Tape::new();
    let x = tape.leaf(ArrayD::from_elem(IxDyn(&[2]), 1.0));
    let c = tape.constant(ArrayD::from_elem(IxDyn(&[2]), 2.0));
    let y = tape.mul(x, c);
    let s = tape.sum(y);
    let grads = tape.backward(s);
    assert!(grads.wrt(c).is_none());
    assert_eq!(grads.wrt(x).unwrap()[[0]], 2.0);
}

#[test]
fn repeated_forward_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x0 = randn(&mut rng, &[3, 8, 8]);
    let w0 = randn(&mut rng, &[4, 3, 3, 3]);
    let run = || {
        let t = Tape::new();
        let x = t.leaf(x0.clone());
        let w = t.constant(w0.clone());
        let y = t.conv2d(x, w, None, 1, 1, 1);
        let r = t.relu(y);
        let p = t.global_avg_pool(r);
        let sq = t.mul(p, p);
        let s = t.sum(sq);
        let g = t.backward(s);
        (t.scalar(s), g.wrt(x).unwrap().clone())
    };
    let (v1, g1) = run();
    let (v2, g2) = run();
    assert_eq!(v1.to_bits(), v2.to_bits());
    assert_eq!(g1, g2);
}

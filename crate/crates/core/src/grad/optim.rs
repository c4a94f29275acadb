//! Optimizers driving the attack loops: Adam for the colorization attack
//! and L-BFGS with a strong-Wolfe line search for the texture attack.

use ndarray::ArrayD;
use std::collections::VecDeque;

/// Adam with bias correction over a fixed list of parameter arrays.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: usize,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// One update step. `grads[i]` of `None` means the parameter did not
    /// participate in the loss this iteration and is treated as zero.
    pub fn step(&mut self, params: &mut [ArrayD<f64>], grads: &[Option<&ArrayD<f64>>]) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect();
            self.v = params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let zero = ArrayD::zeros(p.raw_dim());
            let g = grads[i].unwrap_or(&zero);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            ndarray::Zip::from(m).and(g).for_each(|mi, &gi| {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
            });
            ndarray::Zip::from(v).and(g).for_each(|vi, &gi| {
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
            });
            ndarray::Zip::from(p)
                .and(&self.m[i])
                .and(&self.v[i])
                .for_each(|pi, &mi, &vi| {
                    let mh = mi / bc1;
                    let vh = vi / bc2;
                    *pi -= self.lr * mh / (vh.sqrt() + self.eps);
                });
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    /// History pairs kept for the two-loop recursion.
    pub history: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Evaluation budget per line search.
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { history: 10, c1: 1e-4, c2: 0.9, max_line_search: 20 }
    }
}

/// Why an L-BFGS run returned before using its full step budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStop {
    /// All requested steps were taken.
    Completed,
    /// The strong-Wolfe line search found no acceptable step.
    LineSearchFailed,
    /// Gradient vanished; no descent direction exists.
    GradientVanished,
}

#[derive(Debug, Clone)]
pub struct LbfgsRun {
    pub steps_taken: usize,
    pub final_loss: f64,
    pub stop: LbfgsStop,
}

/// Runs exactly `steps` L-BFGS iterations on `x` (unless the line search
/// fails or the gradient vanishes), minimizing `eval`, which must return the
/// loss and its gradient. Returns the accounting the attack traces record.
pub fn lbfgs_steps<F>(x: &mut [f64], steps: usize, opts: &LbfgsOptions, mut eval: F) -> LbfgsRun
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x.len();
    let (mut fx, mut gx) = eval(x);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();

    for step in 0..steps {
        let ginf = gx.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if ginf < 1e-14 {
            return LbfgsRun { steps_taken: step, final_loss: fx, stop: LbfgsStop::GradientVanished };
        }

        let mut dir = two_loop(&gx, &hist);
        for d in &mut dir {
            *d = -*d;
        }
        let mut d_dot_g: f64 = dir.iter().zip(&gx).map(|(d, g)| d * g).sum();
        if d_dot_g >= 0.0 {
            // Stale curvature produced a non-descent direction; restart from
            // steepest descent.
            hist.clear();
            dir = gx.iter().map(|g| -g).collect();
            d_dot_g = -gx.iter().map(|g| g * g).sum::<f64>();
        }

        let init_t = if hist.is_empty() {
            let g1: f64 = gx.iter().map(|g| g.abs()).sum();
            (1.0 / g1.max(1e-12)).min(1.0)
        } else {
            1.0
        };

        match strong_wolfe(x, &dir, fx, d_dot_g, init_t, opts, &mut eval) {
            Some((t, f_new, g_new)) => {
                let mut s = vec![0.0; n];
                let mut y = vec![0.0; n];
                let mut sy = 0.0;
                for i in 0..n {
                    s[i] = t * dir[i];
                    y[i] = g_new[i] - gx[i];
                    sy += s[i] * y[i];
                    x[i] += s[i];
                }
                if sy > 1e-12 {
                    if hist.len() == opts.history {
                        hist.pop_front();
                    }
                    hist.push_back((s, y, 1.0 / sy));
                }
                fx = f_new;
                gx = g_new;
            }
            None => {
                return LbfgsRun {
                    steps_taken: step,
                    final_loss: fx,
                    stop: LbfgsStop::LineSearchFailed,
                };
            }
        }
    }
    LbfgsRun { steps_taken: steps, final_loss: fx, stop: LbfgsStop::Completed }
}

fn two_loop(g: &[f64], hist: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y, rho) in hist.iter().rev() {
        let a = rho * s.iter().zip(&q).map(|(si, qi)| si * qi).sum::<f64>();
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = hist.back() {
        let sy: f64 = s.iter().zip(y).map(|(si, yi)| si * yi).sum();
        let yy: f64 = y.iter().map(|yi| yi * yi).sum();
        if yy > 0.0 {
            let gamma = sy / yy;
            for qi in &mut q {
                *qi *= gamma;
            }
        }
    }
    for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
        let b = rho * y.iter().zip(&q).map(|(yi, qi)| yi * qi).sum::<f64>();
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q
}

/// Strong-Wolfe line search (bracket + zoom with bisection). Returns the
/// accepted step, loss and gradient, or `None` when the budget runs out.
fn strong_wolfe<F>(
    x: &[f64],
    dir: &[f64],
    f0: f64,
    d0: f64,
    init_t: f64,
    opts: &LbfgsOptions,
    eval: &mut F,
) -> Option<(f64, f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x.len();
    let mut probe = vec![0.0; n];
    let mut evals = 0usize;
    let mut phi = |t: f64, probe: &mut [f64], evals: &mut usize| -> (f64, Vec<f64>, f64) {
        for i in 0..n {
            probe[i] = x[i] + t * dir[i];
        }
        *evals += 1;
        let (f, g) = eval(probe);
        let dphi: f64 = g.iter().zip(dir).map(|(gi, di)| gi * di).sum();
        (f, g, dphi)
    };

    let mut t_prev = 0.0;
    let mut f_prev = f0;
    let mut t = init_t;
    let t_max = 1e6;

    let mut bracket: Option<(f64, f64, f64, f64)> = None; // (lo, f_lo, hi, f_hi)
    while evals < opts.max_line_search {
        let (f, g, dphi) = phi(t, &mut probe, &mut evals);
        if !f.is_finite() || f > f0 + opts.c1 * t * d0 || (t_prev > 0.0 && f >= f_prev) {
            bracket = Some((t_prev, f_prev, t, f));
            break;
        }
        if dphi.abs() <= -opts.c2 * d0 {
            return Some((t, f, g));
        }
        if dphi >= 0.0 {
            bracket = Some((t, f, t_prev, f_prev));
            break;
        }
        t_prev = t;
        f_prev = f;
        t = (2.0 * t).min(t_max);
        if t >= t_max {
            return None;
        }
    }
    let (mut lo, mut f_lo, mut hi, mut _f_hi) = bracket?;

    while evals < opts.max_line_search {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() < 1e-16 * (1.0 + lo.abs()) {
            return None;
        }
        let (f, g, dphi) = phi(mid, &mut probe, &mut evals);
        if !f.is_finite() || f > f0 + opts.c1 * mid * d0 || f >= f_lo {
            hi = mid;
            _f_hi = f;
        } else {
            if dphi.abs() <= -opts.c2 * d0 {
                return Some((mid, f, g));
            }
            if dphi * (hi - lo) >= 0.0 {
                hi = lo;
                _f_hi = f_lo;
            }
            lo = mid;
            f_lo = f;
        }
    }
    None
}

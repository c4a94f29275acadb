//! Separable Gaussian smoothing with reflective borders.

use crate::error::{Error, Result};
use ndarray::Array2;

/// Normalized 1-D Gaussian kernel truncated at 4σ.
fn kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Reflects an index into `[0, n)` (edge-inclusive, `[b a | a b c | c b]`
/// style). Applied repeatedly so kernels wider than the image stay valid.
fn reflect(mut i: i64, n: i64) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Gaussian smoothing of a single channel. Symmetric kernel plus symmetric
/// padding preserves the channel sum exactly, so constant fields pass
/// through unchanged and the mean is conserved.
pub fn gaussian_blur(channel: &Array2<f64>, sigma: f64) -> Result<Array2<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let k = kernel(sigma);
    let radius = (k.len() / 2) as i64;
    let (h, w) = channel.dim();

    let mut pass1 = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let sx = reflect(x as i64 + j as i64 - radius, w as i64);
                acc += kv * channel[[y, sx]];
            }
            pass1[[y, x]] = acc;
        }
    }
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let sy = reflect(y as i64 + j as i64 - radius, h as i64);
                acc += kv * pass1[[sy, x]];
            }
            out[[y, x]] = acc;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_nonpositive_sigma() {
        let c = Array2::zeros((4, 4));
        assert!(gaussian_blur(&c, 0.0).is_err());
        assert!(gaussian_blur(&c, -1.0).is_err());
    }

    #[test]
    fn constant_field_unchanged() {
        let c = Array2::from_elem((9, 7), 0.37);
        for sigma in [0.5, 1.0, 3.0] {
            let out = gaussian_blur(&c, sigma).unwrap();
            for v in out.iter() {
                assert!((v - 0.37).abs() < 1e-12);
            }
        }
    }

    // Oracle: the impulse response of a linear filter is the kernel itself,
    // evaluated directly from the Gaussian formula.
    #[test]
    fn impulse_response_is_the_kernel() {
        let sigma = 1.0;
        let n = 17;
        let mid = n / 2;
        let mut c = Array2::zeros((n, n));
        c[[mid, mid]] = 1.0;
        let out = gaussian_blur(&c, sigma).unwrap();

        let radius = (4.0 * sigma).ceil() as i64;
        let raw: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
            .collect();
        let norm: f64 = raw.iter().sum();
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let want = raw[(dy + radius) as usize] * raw[(dx + radius) as usize]
                    / (norm * norm);
                let got = out[[(mid as i64 + dy) as usize, (mid as i64 + dx) as usize]];
                assert!((got - want).abs() < 1e-12, "({dy},{dx}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn mean_preserved_with_reflective_border() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = Array2::zeros((11, 13));
        c.mapv_inplace(|_| rng.random::<f64>());
        let before: f64 = c.sum();
        for sigma in [0.7, 3.0, 8.0] {
            let out = gaussian_blur(&c, sigma).unwrap();
            let after: f64 = out.sum();
            assert!(
                (before - after).abs() / before.max(1.0) < 1e-6,
                "sigma {sigma}: sum {before} -> {after}"
            );
        }
    }
}

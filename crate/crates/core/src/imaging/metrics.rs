//! Perturbation norms between an original and an adversarial image.

use super::RgbImage;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Threshold below which a per-channel difference is treated as "unchanged"
/// for the L0 pixel count (one 8-bit quantization step).
pub const L0_THRESHOLD: f64 = 1.0 / 255.0;

/// Perturbation magnitudes on a `[0,1]` pixel scale.
///
/// `l0`: fraction of pixels changed in any channel; `l2`: root-mean-square
/// difference over all H·W·3 values; `linf`: maximum absolute per-channel
/// difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub l0: f64,
    pub l2: f64,
    pub linf: f64,
}

impl NormReport {
    pub fn zero() -> Self {
        Self { l0: 0.0, l2: 0.0, linf: 0.0 }
    }
}

pub fn lp_metrics(orig: &RgbImage, adv: &RgbImage) -> Result<NormReport> {
    if orig.pixels().dim() != adv.pixels().dim() {
        return Err(Error::DimensionMismatch(format!(
            "lp_metrics: {:?} vs {:?}",
            orig.pixels().dim(),
            adv.pixels().dim()
        )));
    }
    let (h, w, _) = orig.pixels().dim();
    let mut changed_pixels = 0usize;
    let mut sq_sum = 0.0;
    let mut linf: f64 = 0.0;
    for y in 0..h {
        for x in 0..w {
            let mut pixel_changed = false;
            for c in 0..3 {
                let d = (orig.pixels()[[y, x, c]] - adv.pixels()[[y, x, c]]).abs();
                if d > L0_THRESHOLD {
                    pixel_changed = true;
                }
                sq_sum += d * d;
                linf = linf.max(d);
            }
            if pixel_changed {
                changed_pixels += 1;
            }
        }
    }
    Ok(NormReport {
        l0: changed_pixels as f64 / (h * w) as f64,
        l2: (sq_sum / (h * w * 3) as f64).sqrt(),
        linf,
    })
}

//! Image representations, color-space conversion, smoothing, perturbation
//! metrics and lossless I/O shared by all attacks and reports.

mod blur;
mod color;
mod io;
mod metrics;

pub use blur::gaussian_blur;
pub use color::{lab_pixel_to_rgb, lab_pixel_to_rgb_jac, lab_to_rgb, rgb_pixel_to_lab, rgb_to_lab};
pub use io::{load_image, save_png};
pub use metrics::{lp_metrics, NormReport};

use crate::error::{Error, Result};
use ndarray::{Array2, Array3};

/// An image as H×W×3 sRGB values in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pixels: Array3<f64>,
}

impl RgbImage {
    /// Wraps an H×W×3 array, validating the range invariant.
    pub fn new(pixels: Array3<f64>) -> Result<Self> {
        let (h, w, c) = pixels.dim();
        if h == 0 || w == 0 || c != 3 {
            return Err(Error::DimensionMismatch(format!(
                "expected H×W×3 with H,W >= 1, got {h}×{w}×{c}"
            )));
        }
        if pixels.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidArgument(
                "rgb values must lie in [0,1]".into(),
            ));
        }
        Ok(Self { pixels })
    }

    /// Wraps an array, clamping every value into `[0,1]`.
    pub fn from_clamped(mut pixels: Array3<f64>) -> Result<Self> {
        pixels.mapv_inplace(|v| v.clamp(0.0, 1.0));
        Self::new(pixels)
    }

    /// Constant-color image.
    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        let mut px = Array3::zeros((height, width, 3));
        for c in 0..3 {
            if !(0.0..=1.0).contains(&rgb[c]) {
                return Err(Error::InvalidArgument("rgb values must lie in [0,1]".into()));
            }
            px.slice_mut(ndarray::s![.., .., c]).fill(rgb[c]);
        }
        Self::new(px)
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array3<f64> {
        self.pixels
    }
}

/// An image split into its CIELAB channels: `L` in `[0,100]`,
/// `ab` in `[-128,127]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    l: Array2<f64>,
    ab: Array3<f64>,
}

pub const AB_MIN: f64 = -128.0;
pub const AB_MAX: f64 = 127.0;

impl LabImage {
    pub fn new(l: Array2<f64>, ab: Array3<f64>) -> Result<Self> {
        let (h, w) = l.dim();
        let (ah, aw, ac) = ab.dim();
        if h == 0 || w == 0 || (ah, aw) != (h, w) || ac != 2 {
            return Err(Error::DimensionMismatch(format!(
                "L is {h}×{w}, ab is {ah}×{aw}×{ac}"
            )));
        }
        if l.iter().any(|&v| !(0.0..=100.0).contains(&v)) {
            return Err(Error::InvalidArgument("L must lie in [0,100]".into()));
        }
        if ab.iter().any(|&v| !(AB_MIN..=AB_MAX).contains(&v)) {
            return Err(Error::InvalidArgument(
                "ab must lie in [-128,127]".into(),
            ));
        }
        Ok(Self { l, ab })
    }

    pub fn height(&self) -> usize {
        self.l.dim().0
    }

    pub fn width(&self) -> usize {
        self.l.dim().1
    }

    pub fn l(&self) -> &Array2<f64> {
        &self.l
    }

    pub fn ab(&self) -> &Array3<f64> {
        &self.ab
    }

    /// Replaces the AB channels, keeping L. Values are clamped to the valid
    /// AB range first.
    pub fn with_ab(&self, mut ab: Array3<f64>) -> Result<Self> {
        ab.mapv_inplace(|v| v.clamp(AB_MIN, AB_MAX));
        Self::new(self.l.clone(), ab)
    }
}

/// Bilinear resize of an H×W×3 image; used by classifier preprocessing.
pub fn resize_bilinear(img: &RgbImage, out_h: usize, out_w: usize) -> Result<RgbImage> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("resize target must be >= 1".into()));
    }
    let (h, w, _) = img.pixels.dim();
    let mut out = Array3::zeros((out_h, out_w, 3));
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            for c in 0..3 {
                let v00 = img.pixels[[y0, x0, c]];
                let v01 = img.pixels[[y0, x1, c]];
                let v10 = img.pixels[[y1, x0, c]];
                let v11 = img.pixels[[y1, x1, c]];
                out[[oy, ox, c]] = v00 * (1.0 - ty) * (1.0 - tx)
                    + v01 * (1.0 - ty) * tx
                    + v10 * ty * (1.0 - tx)
                    + v11 * ty * tx;
            }
        }
    }
    RgbImage::from_clamped(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_image_rejects_out_of_range() {
        let mut px = Array3::zeros((2, 2, 3));
        px[[0, 0, 0]] = 1.5;
        assert!(RgbImage::new(px).is_err());
    }

    #[test]
    fn lab_image_checks_dims() {
        let l = Array2::zeros((4, 4));
        let ab = Array3::zeros((4, 5, 2));
        assert!(LabImage::new(l, ab).is_err());
    }

    #[test]
    fn resize_identity_on_same_size() {
        let img = RgbImage::filled(5, 7, [0.2, 0.4, 0.6]).unwrap();
        let out = resize_bilinear(&img, 5, 7).unwrap();
        assert_eq!(img.pixels(), out.pixels());
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = RgbImage::filled(8, 8, [0.3, 0.3, 0.3]).unwrap();
        let out = resize_bilinear(&img, 3, 5).unwrap();
        for v in out.pixels().iter() {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }
}

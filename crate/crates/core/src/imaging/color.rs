//! sRGB (D65) ↔ CIELAB conversion.
//!
//! Uses the classical Rec.709-derived sRGB↔XYZ matrices (the same constants
//! as scikit-image and OpenCV) with the white point taken from the matrix
//! row sums so that pure white maps to exactly a = b = 0.

use super::{LabImage, RgbImage};
use crate::error::Result;
use ndarray::{Array2, Array3};

const RGB2XYZ: [[f64; 3]; 3] = [
    [0.412453, 0.357580, 0.180423],
    [0.212671, 0.715160, 0.072169],
    [0.019334, 0.119193, 0.950227],
];

const XYZ2RGB: [[f64; 3]; 3] = [
    [3.240481343201, -1.537151516271, -0.498536326169],
    [-0.969254949997, 1.875990001490, 0.041555926558],
    [0.055646639135, -0.204041338367, 1.057311069645],
];

const WHITE: [f64; 3] = [0.950456, 1.0, 1.088754];

const DELTA: f64 = 6.0 / 29.0;

fn srgb_decode(s: f64) -> f64 {
    if s <= 0.04045 {
        s / 12.92
    } else {
        ((s + 0.055) / 1.055).powf(2.4)
    }
}

fn srgb_encode(u: f64) -> f64 {
    if u <= 0.0031308 {
        12.92 * u
    } else {
        1.055 * u.powf(1.0 / 2.4) - 0.055
    }
}

/// d(srgb_encode)/d(linear), ignoring any later clamp.
fn srgb_encode_deriv(u: f64) -> f64 {
    if u <= 0.0031308 {
        12.92
    } else {
        (1.055 / 2.4) * u.powf(1.0 / 2.4 - 1.0)
    }
}

fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(ft: f64) -> f64 {
    if ft > DELTA {
        ft * ft * ft
    } else {
        3.0 * DELTA * DELTA * (ft - 4.0 / 29.0)
    }
}

fn lab_f_inv_deriv(ft: f64) -> f64 {
    if ft > DELTA {
        3.0 * ft * ft
    } else {
        3.0 * DELTA * DELTA
    }
}

/// Converts a single sRGB pixel in `[0,1]` to CIELAB.
pub fn rgb_pixel_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = [srgb_decode(rgb[0]), srgb_decode(rgb[1]), srgb_decode(rgb[2])];
    let mut xyz = [0.0; 3];
    for (i, row) in RGB2XYZ.iter().enumerate() {
        xyz[i] = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
    }
    let fx = lab_f(xyz[0] / WHITE[0]);
    let fy = lab_f(xyz[1] / WHITE[1]);
    let fz = lab_f(xyz[2] / WHITE[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Converts a single CIELAB pixel to sRGB, clamping out-of-gamut values
/// into `[0,1]`.
pub fn lab_pixel_to_rgb(l: f64, a: f64, b: f64) -> [f64; 3] {
    let fy = (l + 16.0) / 116.0;
    let fx = fy + a / 500.0;
    let fz = fy - b / 200.0;
    let xyz = [
        WHITE[0] * lab_f_inv(fx),
        WHITE[1] * lab_f_inv(fy),
        WHITE[2] * lab_f_inv(fz),
    ];
    let mut out = [0.0; 3];
    for (i, row) in XYZ2RGB.iter().enumerate() {
        let lin = row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2];
        out[i] = srgb_encode(lin).clamp(0.0, 1.0);
    }
    out
}

/// Converts a CIELAB pixel to sRGB together with the Jacobian of the three
/// output channels with respect to `(a, b)`; `l` is treated as fixed. The
/// derivative is zero wherever the output clamp is active, which is what
/// gradient-based attacks on the AB channels backpropagate through.
pub fn lab_pixel_to_rgb_jac(l: f64, a: f64, b: f64) -> ([f64; 3], [[f64; 2]; 3]) {
    let fy = (l + 16.0) / 116.0;
    let fx = fy + a / 500.0;
    let fz = fy - b / 200.0;
    let xyz = [
        WHITE[0] * lab_f_inv(fx),
        WHITE[1] * lab_f_inv(fy),
        WHITE[2] * lab_f_inv(fz),
    ];
    // dX/da and dZ/db; Y does not depend on (a, b).
    let dx_da = WHITE[0] * lab_f_inv_deriv(fx) / 500.0;
    let dz_db = -WHITE[2] * lab_f_inv_deriv(fz) / 200.0;
    let mut rgb = [0.0; 3];
    let mut jac = [[0.0; 2]; 3];
    for (i, row) in XYZ2RGB.iter().enumerate() {
        let lin = row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2];
        let enc = srgb_encode(lin);
        rgb[i] = enc.clamp(0.0, 1.0);
        if (0.0..=1.0).contains(&enc) {
            let d_enc = srgb_encode_deriv(lin);
            jac[i][0] = d_enc * row[0] * dx_da;
            jac[i][1] = d_enc * row[2] * dz_db;
        }
    }
    (rgb, jac)
}

/// Standard sRGB→CIELAB under D65; invertible by [`lab_to_rgb`] within
/// round-trip tolerance on in-gamut inputs.
pub fn rgb_to_lab(img: &RgbImage) -> LabImage {
    let (h, w, _) = img.pixels().dim();
    let mut l = Array2::zeros((h, w));
    let mut ab = Array3::zeros((h, w, 2));
    for y in 0..h {
        for x in 0..w {
            let p = [
                img.pixels()[[y, x, 0]],
                img.pixels()[[y, x, 1]],
                img.pixels()[[y, x, 2]],
            ];
            let lab = rgb_pixel_to_lab(p);
            l[[y, x]] = lab[0].clamp(0.0, 100.0);
            ab[[y, x, 0]] = lab[1].clamp(super::AB_MIN, super::AB_MAX);
            ab[[y, x, 1]] = lab[2].clamp(super::AB_MIN, super::AB_MAX);
        }
    }
    LabImage::new(l, ab).expect("conversion output clamped to valid ranges")
}

/// CIELAB→sRGB with out-of-gamut values clamped into `[0,1]`.
pub fn lab_to_rgb(img: &LabImage) -> Result<RgbImage> {
    let (h, w) = img.l().dim();
    let mut px = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let rgb = lab_pixel_to_rgb(img.l()[[y, x]], img.ab()[[y, x, 0]], img.ab()[[y, x, 1]]);
            for c in 0..3 {
                px[[y, x, c]] = rgb[c];
            }
        }
    }
    RgbImage::new(px)
}

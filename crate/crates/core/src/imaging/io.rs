//! Image file I/O. Adversarial outputs are always written as PNG — a lossy
//! format would destroy the perturbation — while readers accept PNG and
//! JPEG.

use super::RgbImage;
use crate::error::Result;
use ndarray::Array3;
use std::path::Path;

/// Saves with 8-bit channel quantization (round to nearest step).
pub fn save_png<P: AsRef<Path>>(img: &RgbImage, path: P) -> Result<()> {
    let (h, w, _) = img.pixels().dim();
    let mut buf = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                buf.push((img.pixels()[[y, x, c]] * 255.0).round() as u8);
            }
        }
    }
    image::save_buffer(
        path,
        &buf,
        w as u32,
        h as u32,
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(())
}

pub fn load_image<P: AsRef<Path>>(path: P) -> Result<RgbImage> {
    let dyn_img = image::ImageReader::open(path)?.decode()?;
    let rgb = dyn_img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let mut px = Array3::zeros((h as usize, w as usize, 3));
    for (x, y, p) in rgb.enumerate_pixels() {
        for c in 0..3 {
            px[[y as usize, x as usize, c]] = p.0[c] as f64 / 255.0;
        }
    }
    RgbImage::new(px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn png_round_trip_within_quantization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut px = Array3::zeros((6, 9, 3));
        px.mapv_inplace(|_| rng.random::<f64>());
        let img = RgbImage::new(px).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        save_png(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.height(), 6);
        assert_eq!(back.width(), 9);
        let max_err = img
            .pixels()
            .iter()
            .zip(back.pixels().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        // Half a quantization step plus rounding slack.
        assert!(max_err <= 0.5 / 255.0 + 1e-9, "max err {max_err}");
    }

    #[test]
    fn quantized_values_round_trip_exactly() {
        let mut px = Array3::zeros((2, 2, 3));
        for (i, v) in px.iter_mut().enumerate() {
            *v = (i % 256) as f64 / 255.0;
        }
        let img = RgbImage::new(px).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.png");
        save_png(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(img.pixels(), back.pixels());
    }
}

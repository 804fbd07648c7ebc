//! Crops, resampling and flips.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::rng::Rng;
use crate::tokenizer::SpectralImage;

/// Pixel window `[x0, x0 + width) x [y0, y0 + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropWindow {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl CropWindow {
    pub fn full(image: &SpectralImage) -> Self {
        Self {
            x0: 0,
            y0: 0,
            width: image.width(),
            height: image.height(),
        }
    }
}

fn sample_axis(start: usize, len: usize, out: usize, i: usize) -> (usize, usize, f32) {
    let scale = len as f64 / out as f64;
    let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(len - 1);
    (start + lo, start + hi, (pos - lo as f64) as f32)
}

/// Bilinear resample of a window onto an `out_h x out_w` grid using pixel
/// centres. A window resampled to its own size is copied exactly.
pub fn crop_resize(image: &SpectralImage, win: &CropWindow, out_h: usize, out_w: usize) -> Result<SpectralImage> {
    ensure!(out_h > 0 && out_w > 0, "resample target must be non-empty");
    ensure!(
        win.width > 0 && win.height > 0 && win.x0 + win.width <= image.width() && win.y0 + win.height <= image.height(),
        "crop window {win:?} exceeds frame {}x{}",
        image.height(),
        image.width()
    );
    let ys: Vec<_> = (0..out_h).map(|i| sample_axis(win.y0, win.height, out_h, i)).collect();
    let xs: Vec<_> = (0..out_w).map(|i| sample_axis(win.x0, win.width, out_w, i)).collect();
    let w = image.width();
    let mut out = Vec::with_capacity(image.channels() * out_h * out_w);
    for c in 0..image.channels() {
        let band = image.band(c);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = band[y0 * w + x0] * (1.0 - fx) + band[y0 * w + x1] * fx;
                let bottom = band[y1 * w + x0] * (1.0 - fx) + band[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    SpectralImage::new(out_h, out_w, out, image.band_ids().to_vec())
}

pub fn resize(image: &SpectralImage, out_h: usize, out_w: usize) -> Result<SpectralImage> {
    crop_resize(image, &CropWindow::full(image), out_h, out_w)
}

/// Square window covering an area fraction drawn uniformly from `scale`.
pub fn random_window(height: usize, width: usize, scale: (f64, f64), rng: &mut Rng) -> Result<CropWindow> {
    let (lo, hi) = scale;
    ensure!(lo > 0.0 && lo <= hi && hi <= 1.0, "crop scale range ({lo}, {hi}) must lie in (0, 1]");
    let s = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let side = ((s * (height * width) as f64).sqrt().round() as usize).clamp(1, height.min(width));
    let y0 = rng.gen_range(0..=height - side);
    let x0 = rng.gen_range(0..=width - side);
    Ok(CropWindow {
        x0,
        y0,
        width: side,
        height: side,
    })
}

pub fn random_resized_crop(image: &SpectralImage, scale: (f64, f64), out: usize, rng: &mut Rng) -> Result<SpectralImage> {
    let win = random_window(image.height(), image.width(), scale, rng)?;
    crop_resize(image, &win, out, out)
}

pub fn hflip(image: &SpectralImage) -> SpectralImage {
    let mut out = image.clone();
    let w = image.width();
    for c in 0..image.channels() {
        for row in out.band_mut(c).chunks_exact_mut(w) {
            row.reverse();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn ramp(h: usize, w: usize) -> SpectralImage {
        let px = (0..h * w).map(|i| i as f32).collect();
        SpectralImage::new(h, w, px, vec!["S0".into()]).unwrap()
    }

    #[test]
    fn same_size_is_copy() {
        let img = ramp(6, 5);
        assert_eq!(resize(&img, 6, 5).unwrap(), img);
        let win = CropWindow { x0: 1, y0: 2, width: 3, height: 3 };
        let c = crop_resize(&img, &win, 3, 3).unwrap();
        assert_eq!(c.get(0, 0, 0), img.get(0, 2, 1));
        assert_eq!(c.get(0, 2, 2), img.get(0, 4, 3));
    }

    #[test]
    fn downsample_averages() {
        let img = ramp(2, 2);
        let d = resize(&img, 1, 1).unwrap();
        assert!((d.get(0, 0, 0) - 1.5).abs() < 1e-6);
    }

    #[test]
    fn window_bounds() {
        let mut rng = stream_rng(3, Stream::Augment, &[]);
        for _ in 0..200 {
            let w = random_window(32, 32, (0.2, 1.0), &mut rng).unwrap();
            assert!(w.x0 + w.width <= 32 && w.y0 + w.height <= 32);
            assert!(w.width >= 14);
        }
        assert!(random_window(32, 32, (0.0, 1.0), &mut rng).is_err());
        let img = ramp(4, 4);
        assert!(crop_resize(&img, &CropWindow { x0: 2, y0: 0, width: 3, height: 2 }, 2, 2).is_err());
    }

    #[test]
    fn flip_twice_identity() {
        let img = ramp(3, 4);
        let f = hflip(&img);
        assert_eq!(f.get(0, 0, 0), 3.0);
        assert_eq!(hflip(&f), img);
    }
}

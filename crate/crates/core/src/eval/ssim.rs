//! Structural similarity on Rec. 601 luma.

use crate::error::{Error, Result};
use crate::raster::MultiChannelImage;

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

/// `Y = 0.299 R + 0.587 G + 0.114 B`, values in `[0,1]`.
pub fn luma(img: &MultiChannelImage) -> Result<Vec<f64>> {
    let rgb = img.require("rgb")?;
    Ok(rgb
        .chunks(3)
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect())
}

fn kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable Gaussian filter over the valid region only.
fn filter(x: &[f64], h: usize, w: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - WINDOW + 1, w - WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for c in 0..ow {
            rows[y * ow + c] = (0..WINDOW).map(|i| k[i] * x[y * w + c + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..WINDOW).map(|i| k[i] * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Mean SSIM over all full 11×11 windows (Gaussian σ = 1.5).
pub fn ssim(a: &MultiChannelImage, b: &MultiChannelImage) -> Result<f64> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::ShapeMismatch(format!(
            "ssim of {}x{} and {}x{} images",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (h, w) = (a.height(), a.width());
    if h < WINDOW || w < WINDOW {
        return Err(Error::ShapeMismatch(format!("ssim needs at least {WINDOW}x{WINDOW} pixels")));
    }
    let (x, y) = (luma(a)?, luma(b)?);
    let k = kernel();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = filter(&x, h, w, &k);
    let my = filter(&y, h, w, &k);
    let sxx = filter(&prod(&x, &x), h, w, &k);
    let syy = filter(&prod(&y, &y), h, w, &k);
    let sxy = filter(&prod(&x, &y), h, w, &k);
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            ((2.0 * ux * uy + C1) * (2.0 * cxy + C2)) / ((ux * ux + uy * uy + C1) * (vx + vy + C2))
        })
        .sum();
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> MultiChannelImage {
        let mut rgb = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let v = f(y, x);
                rgb.extend_from_slice(&[v, v, v]);
            }
        }
        MultiChannelImage::new(h, w).with("rgb", 3, rgb).unwrap()
    }

    #[test]
    fn identical_is_one() {
        let a = gray(20, 24, |y, x| ((x * 3 + y * 7) % 11) as f32 / 11.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_offset_closed_form() {
        let (c, d) = (0.25, 0.75);
        let a = gray(16, 16, |_, _| c);
        let b = gray(16, 16, |_, _| d);
        // zero variance: only the luminance term remains
        let (c, d) = (c as f64, d as f64);
        let expected = (2.0 * c * d + C1) / (c * c + d * d + C1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn symmetric_and_checked() {
        let a = gray(15, 18, |y, x| ((x * y) % 5) as f32 / 5.0);
        let b = gray(15, 18, |y, x| ((x + 2 * y) % 7) as f32 / 7.0);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() <= 1e-9);
        assert!(ssim(&a, &gray(15, 17, |_, _| 0.0)).is_err());
        assert!(ssim(&gray(8, 8, |_, _| 0.0), &gray(8, 8, |_, _| 0.0)).is_err());
    }
}

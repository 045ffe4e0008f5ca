//! Seeded synthetic data: smooth scenes, planted PRNU patterns and frames
//! rendered under the multiplicative sensor model `I (1 + K) + n`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::imgcore::GrayImage;

/// Zero-mean white Gaussian PRNU pattern with standard deviation `sigma`.
pub fn fingerprint<R: Rng + ?Sized>(width: usize, height: usize, sigma: f64, rng: &mut R) -> GrayImage {
    let d = Normal::new(0.0, sigma).expect("valid sigma");
    GrayImage::from_fn(width, height, |_, _| d.sample(rng))
}

/// Smooth scene in roughly `[40, 215]`: a gradient, a handful of random
/// low-frequency cosines and a few soft-edged disks.
pub fn scene<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> GrayImage {
    use std::f64::consts::PI;
    let (w, h) = (width as f64, height as f64);
    let gx = rng.gen_range(-30.0..30.0);
    let gy = rng.gen_range(-30.0..30.0);
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let period = rng.gen_range(0.15..0.8) * w.max(h);
            let theta = rng.gen_range(0.0..PI);
            (2.0 * PI * theta.cos() / period, 2.0 * PI * theta.sin() / period, rng.gen_range(0.0..2.0 * PI), rng.gen_range(4.0..12.0))
        })
        .collect();
    let disks: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| (rng.gen_range(0.0..w), rng.gen_range(0.0..h), rng.gen_range(0.05..0.2) * w.min(h), rng.gen_range(-25.0..25.0)))
        .collect();
    GrayImage::from_fn(width, height, |x, y| {
        let (x, y) = (x as f64, y as f64);
        let mut v = 128.0 + gx * (x / w - 0.5) + gy * (y / h - 0.5);
        for &(kx, ky, ph, a) in &waves {
            v += a * (kx * x + ky * y + ph).cos();
        }
        for &(cx, cy, r, a) in &disks {
            let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            v += a / (1.0 + ((d - r) / 3.0).exp());
        }
        v.clamp(0.0, 255.0)
    })
}

/// Flat-field exposure: uniform `level` with a gentle vignetting fall-off.
pub fn flat_field(width: usize, height: usize, level: f64) -> GrayImage {
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let r2max = cx * cx + cy * cy;
    GrayImage::from_fn(width, height, |x, y| {
        let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
        level * (1.0 - 0.15 * r2 / r2max)
    })
}

/// `scene (1 + prnu) + n`, `n ~ N(0, noise_sigma^2)`.
pub fn render<R: Rng + ?Sized>(scene: &GrayImage, prnu: &GrayImage, noise_sigma: f64, rng: &mut R) -> GrayImage {
    assert_eq!(scene.dims(), prnu.dims(), "scene and PRNU must have equal size");
    let d = Normal::new(0.0, noise_sigma.max(0.0)).expect("valid sigma");
    let data = scene
        .data()
        .iter()
        .zip(prnu.data())
        .map(|(&i, &k)| i * (1.0 + k) + if noise_sigma > 0.0 { d.sample(rng) } else { 0.0 })
        .collect();
    GrayImage::new(scene.width(), scene.height(), data).expect("finite samples")
}

//! Noise residual extraction: wavelet denoising followed by the usual PRNU
//! post-processing (row/column zero-meaning and Wiener filtering in the DFT
//! domain).

mod wavelet;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::GrayImage;
use crate::spectral::Fft2d;

pub use wavelet::DB8_LO;
use wavelet::{decompose, reconstruct, Filters, Plane};

pub const MIN_DIMENSION: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Number of wavelet decomposition levels.
    pub levels: usize,
    /// Assumed noise standard deviation on a 0-255 intensity scale.
    pub sigma0: f64,
    /// Square window sizes for the local variance estimate.
    pub windows: Vec<usize>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { levels: 4, sigma0: 5.0, windows: vec![3, 5, 7, 9] }
    }
}

/// Post-processed noise residual of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseResidual {
    pub raster: GrayImage,
    pub source_dims: (usize, usize),
}

impl std::ops::Deref for NoiseResidual {
    type Target = GrayImage;
    fn deref(&self) -> &GrayImage {
        &self.raster
    }
}

impl NoiseResidual {
    /// Wraps an already post-processed raster (for instance one read back from disk).
    pub fn from_raster(raster: GrayImage) -> Self {
        let source_dims = raster.dims();
        Self { raster, source_dims }
    }
}

/// Sliding-window means of `values` over `size x size` windows clipped at the borders.
fn box_mean(values: &[f64], width: usize, height: usize, size: usize) -> Vec<f64> {
    let stride = width + 1;
    let mut integral = vec![0.0; stride * (height + 1)];
    for y in 0..height {
        let mut run = 0.0;
        for x in 0..width {
            run += values[y * width + x];
            integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + run;
        }
    }
    let r = size / 2;
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(height));
        for x in 0..width {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(width));
            let sum = integral[y1 * stride + x1] - integral[y0 * stride + x1] - integral[y1 * stride + x0]
                + integral[y0 * stride + x0];
            out[y * width + x] = sum / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    out
}

/// Minimum over window sizes of the local excess variance `max(0, mean(c^2) - noise_var)`.
fn local_signal_variance(sq: &[f64], width: usize, height: usize, windows: &[usize], noise_var: f64) -> Vec<f64> {
    let mut best = vec![f64::INFINITY; sq.len()];
    for &w in windows {
        for (b, m) in best.iter_mut().zip(box_mean(sq, width, height, w)) {
            *b = b.min((m - noise_var).max(0.0));
        }
    }
    best
}

fn shrink_subband(plane: &mut Plane, windows: &[usize], noise_var: f64) {
    let sq: Vec<f64> = plane.data.iter().map(|c| c * c).collect();
    let var = local_signal_variance(&sq, plane.width, plane.height, windows, noise_var);
    for (c, v) in plane.data.iter_mut().zip(var) {
        *c *= v / (v + noise_var);
    }
}

/// Wavelet-domain Wiener denoiser; returns the denoised estimate of `img`.
pub fn denoise(img: &GrayImage, cfg: &NoiseConfig) -> Result<GrayImage> {
    let (w, h) = img.dims();
    if w < MIN_DIMENSION || h < MIN_DIMENSION {
        return Err(Error::TooSmall { width: w, height: h, min: MIN_DIMENSION });
    }
    if cfg.levels == 0 || cfg.windows.is_empty() || cfg.sigma0.is_nan() || cfg.sigma0 <= 0.0 {
        return Err(Error::invalid("noise config needs levels >= 1, sigma0 > 0 and at least one window"));
    }
    let filters = Filters::db8();
    let mut dec = decompose(&filters, Plane { width: w, height: h, data: img.data().to_vec() }, cfg.levels);
    let noise_var = cfg.sigma0 * cfg.sigma0;
    for level in &mut dec.levels {
        for band in level.details_mut() {
            shrink_subband(band, &cfg.windows, noise_var);
        }
    }
    let out = reconstruct(&filters, &dec);
    Ok(GrayImage::from_vec_unchecked(w, h, out.data))
}

fn zero_mean_rows_cols(data: &mut [f64], width: usize, height: usize) {
    for row in data.chunks_exact_mut(width) {
        let m = row.iter().sum::<f64>() / width as f64;
        row.iter_mut().for_each(|v| *v -= m);
    }
    for x in 0..width {
        let m = (0..height).map(|y| data[y * width + x]).sum::<f64>() / height as f64;
        for y in 0..height {
            data[y * width + x] -= m;
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

/// Wiener filter on the DFT of `data`, suppressing spectral peaks.
///
/// The flat noise level is the median of the normalized power spectrum
/// divided by ln 2 (the median of an exponential variable is ln 2 times its
/// mean), so isolated peaks do not inflate it. Each bin is scaled by
/// `nv / (nv + local excess power)`.
fn wiener_dft(data: &mut [f64], width: usize, height: usize, windows: &[usize]) {
    let plan = Fft2d::new(height, width);
    let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.forward(&mut buf);
    let norm = 1.0 / ((width * height) as f64);
    let power: Vec<f64> = buf.iter().map(|c| c.norm_sqr() * norm).collect();
    let noise_var = median(&mut power.clone()) / std::f64::consts::LN_2;
    let excess = local_signal_variance(&power, width, height, windows, noise_var);
    for (c, e) in buf.iter_mut().zip(excess) {
        let denom = e + noise_var;
        *c *= if denom > 0.0 { noise_var / denom } else { 0.0 };
    }
    plan.inverse(&mut buf);
    for (d, c) in data.iter_mut().zip(buf) {
        *d = c.re * norm;
    }
}

/// Zero-means rows then columns, Wiener-filters in the DFT domain and
/// re-centers rows and columns.
pub fn postprocess(residual: &GrayImage, cfg: &NoiseConfig) -> NoiseResidual {
    let (w, h) = residual.dims();
    let mut data = residual.data().to_vec();
    zero_mean_rows_cols(&mut data, w, h);
    wiener_dft(&mut data, w, h, &cfg.windows);
    // The filter keeps zero bins at zero; this removes round-off only.
    zero_mean_rows_cols(&mut data, w, h);
    NoiseResidual { raster: GrayImage::from_vec_unchecked(w, h, data), source_dims: (w, h) }
}

/// `postprocess(img - denoise(img))`.
pub fn extract(img: &GrayImage, cfg: &NoiseConfig) -> Result<NoiseResidual> {
    let denoised = denoise(img, cfg)?;
    let raw = img.zip_map(&denoised, |a, b| a - b)?;
    Ok(postprocess(&raw, cfg))
}

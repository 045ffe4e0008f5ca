//! Reference fingerprint estimation from flat-field exposures.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgcore::GrayImage;
use crate::noise::{self, NoiseConfig, NoiseResidual, MIN_DIMENSION};

/// Pixels whose accumulated `sum I^2` falls below this get a zero estimate.
pub const DENOMINATOR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    pub raster: GrayImage,
    pub n_images: usize,
    pub device_id: String,
}

impl std::ops::Deref for Fingerprint {
    type Target = GrayImage;
    fn deref(&self) -> &GrayImage {
        &self.raster
    }
}

impl Fingerprint {
    pub fn new(raster: GrayImage, n_images: usize, device_id: impl Into<String>) -> Result<Self> {
        if n_images == 0 {
            return Err(Error::TooFewImages);
        }
        Ok(Self { raster, n_images, device_id: device_id.into() })
    }
}

/// Maximum-likelihood PRNU estimate `sum W_i I_i / sum I_i^2`, post-processed
/// like a residual. Residual extraction runs in parallel; the accumulation
/// order is fixed by the input order.
pub fn estimate(flats: &[GrayImage], device_id: &str, cfg: &NoiseConfig) -> Result<Fingerprint> {
    let first = flats.first().ok_or(Error::TooFewImages)?;
    let (w, h) = first.dims();
    if w < MIN_DIMENSION || h < MIN_DIMENSION {
        return Err(Error::TooSmall { width: w, height: h, min: MIN_DIMENSION });
    }
    for img in flats {
        first.ensure_same_dims(img)?;
    }
    let residuals: Vec<NoiseResidual> =
        flats.par_iter().map(|img| noise::extract(img, cfg)).collect::<Result<_>>()?;
    let mut num = vec![0.0; w * h];
    let mut den = vec![0.0; w * h];
    for (img, res) in flats.iter().zip(&residuals) {
        for (((n, d), &i), &r) in num.iter_mut().zip(den.iter_mut()).zip(img.data()).zip(res.data()) {
            *n += r * i;
            *d += i * i;
        }
    }
    let ratio = num
        .iter()
        .zip(&den)
        .map(|(&n, &d)| if d < DENOMINATOR_FLOOR { 0.0 } else { n / d })
        .collect();
    let raw = GrayImage::new(w, h, ratio)?;
    let raster = noise::postprocess(&raw, cfg).raster;
    Fingerprint::new(raster, flats.len(), device_id)
}

/// Pixel-wise product `K * I`, the reference a frame's residual is tested against.
pub fn scale_by_frame(fp: &GrayImage, frame: &GrayImage) -> Result<GrayImage> {
    fp.zip_map(frame, |k, i| k * i)
}

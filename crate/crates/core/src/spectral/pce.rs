use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{argmax, signed_offset, Fft2d};
use crate::error::{Error, Result};
use crate::imgcore::GrayImage;

/// Side of the square neighborhood around the peak left out of the
/// correlation-energy estimate.
pub const PCE_EXCLUSION: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PceResult {
    pub pce: f64,
    /// Signed `(dx, dy)` at which the residual best matches the shifted reference.
    pub peak_pos: (i64, i64),
    pub peak_value: f64,
    /// Mean squared correlation outside the exclusion neighborhood.
    pub plane_energy: f64,
}

/// Peak-to-correlation energy between a residual and a reference pattern.
///
/// Both inputs are mean-removed and the circular normalized cross-correlation
/// is evaluated over every shift. The peak is the largest signed correlation
/// (ties go to the smallest row-major index) and
/// `PCE = peak^2 / mean(corr^2)` with the mean taken outside an
/// [`PCE_EXCLUSION`]-wide square around the peak.
pub fn pce(residual: &GrayImage, reference: &GrayImage) -> Result<PceResult> {
    residual.ensure_same_dims(reference)?;
    let (w, h) = residual.dims();
    let centered = |img: &GrayImage| -> (Vec<Complex64>, f64) {
        let m = img.mean();
        let buf: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v - m, 0.0)).collect();
        let norm = buf.iter().map(|c| c.re * c.re).sum::<f64>().sqrt();
        (buf, norm)
    };
    let (mut a, na) = centered(residual);
    let (mut b, nb) = centered(reference);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput("zero-energy input to PCE"));
    }

    let plan = Fft2d::new(h, w);
    let (mut fa, mut fb) = (vec![Complex64::default(); w * h], vec![Complex64::default(); w * h]);
    plan.forward_t(&mut a, &mut fa);
    plan.forward_t(&mut b, &mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y.conj();
    }
    plan.inverse_t(&mut fa, &mut a);
    let scale = 1.0 / ((w * h) as f64 * na * nb);
    let plane: Vec<f64> = a.iter().map(|c| c.re * scale).collect();

    let best = argmax(&plane);
    let (px, py) = (best % w, best / w);
    let peak_value = plane[best];
    let half = (PCE_EXCLUSION / 2) as i64;
    let excluded = |x: usize, y: usize| -> bool {
        let dx = signed_offset((x + w - px) % w, w);
        let dy = signed_offset((y + h - py) % h, h);
        dx.abs() <= half && dy.abs() <= half
    };
    let (mut sum, mut count) = (0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            if !excluded(x, y) {
                let v = plane[y * w + x];
                sum += v * v;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::DegenerateInput("correlation plane is smaller than the peak exclusion area"));
    }
    let plane_energy = sum / count as f64;
    if plane_energy == 0.0 {
        return Err(Error::DegenerateInput("correlation plane has no energy outside the peak"));
    }
    Ok(PceResult {
        pce: peak_value.max(0.0).powi(2) / plane_energy,
        peak_pos: (signed_offset(px, w), signed_offset(py, h)),
        peak_value,
        plane_energy,
    })
}

//! FFT services, phase correlation and the peak-to-correlation-energy test.

mod fft;
mod pce;

pub use fft::{fftshift, ifftshift, signed_offset, transpose, Fft2d};
pub use pce::{pce, PceResult, PCE_EXCLUSION};

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::imgcore::GrayImage;

/// Square `N x N` spectrum with DC moved to `(N/2, N/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    size: usize,
    data: Vec<Complex64>,
    // Spatial support (pixels) of the transformed signal; bounds how fast
    // the spectrum can vary from bin to bin.
    extent: usize,
}

impl Spectrum {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Bin at signed frequency `(kx, ky)`, both in `[-N/2, N/2)`.
    #[inline]
    pub fn at(&self, kx: i64, ky: i64) -> Complex64 {
        let h = (self.size / 2) as i64;
        self.data[((ky + h) as usize) * self.size + (kx + h) as usize]
    }

    /// Largest spatial extent of the input, in pixels. The spectrum varies
    /// at most `extent / (2 N)` cycles per bin.
    pub fn extent(&self) -> usize {
        self.extent
    }

    /// Magnitude-only copy. Its extent doubles: `|X|^2` is the transform of
    /// the input's autocorrelation.
    pub fn magnitude(&self) -> Self {
        Self { size: self.size, data: self.data.iter().map(|c| Complex64::new(c.norm(), 0.0)).collect(), extent: 2 * self.extent }
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest deviation from `X(-k) = conj(X(k))` over bins whose mirror is
    /// inside the array.
    pub fn conjugate_symmetry_error(&self) -> f64 {
        let h = (self.size / 2) as i64;
        let mut worst = 0.0f64;
        for ky in (-h + 1)..h {
            for kx in (-h + 1)..h {
                worst = worst.max((self.at(kx, ky) - self.at(-kx, -ky).conj()).norm());
            }
        }
        worst
    }

    /// Spectrum of the input translated by `(dx, dy)` pixels on the canvas:
    /// every bin is multiplied by `exp(-2 pi i (kx dx + ky dy) / N)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let n = self.size;
        let h = (n / 2) as i64;
        let tau = -2.0 * std::f64::consts::PI / n as f64;
        let ramp = |d: f64| -> Vec<Complex64> { (0..n as i64).map(|i| Complex64::from_polar(1.0, tau * (i - h) as f64 * d)).collect() };
        let (rx, ry) = (ramp(dx), ramp(dy));
        let mut data = self.data.clone();
        for (row, &fy) in data.chunks_exact_mut(n).zip(&ry) {
            for (v, &fx) in row.iter_mut().zip(&rx) {
                *v *= fx * fy;
            }
        }
        Self { size: n, data, extent: self.extent }
    }

    fn from_standard(size: usize, data: Vec<Complex64>, extent: usize) -> Self {
        Self { size, data: fftshift(&data, size, size), extent }
    }

    fn to_standard(&self) -> Vec<Complex64> {
        ifftshift(&self.data, self.size, self.size)
    }
}

fn check_fft_size(img: &GrayImage, fft_size: usize) -> Result<()> {
    if !fft_size.is_power_of_two() || fft_size < img.width() || fft_size < img.height() {
        return Err(Error::SizeTooSmall { fft_size, width: img.width(), height: img.height() });
    }
    Ok(())
}

/// Zero-pads `img` at the top-left of an `fft_size` canvas and returns its
/// centered 2D spectrum.
pub fn fft2_padded(img: &GrayImage, fft_size: usize) -> Result<Spectrum> {
    check_fft_size(img, fft_size)?;
    let mut buf = vec![Complex64::default(); fft_size * fft_size];
    for y in 0..img.height() {
        for (x, &v) in img.row(y).iter().enumerate() {
            buf[y * fft_size + x] = Complex64::new(v, 0.0);
        }
    }
    Fft2d::new(fft_size, fft_size).forward(&mut buf);
    Ok(Spectrum::from_standard(fft_size, buf, img.width().max(img.height())))
}

/// Centered spectrum whose phase origin is the image center `((w-1)/2, (h-1)/2)`.
///
/// The image is embedded with its center wrapped onto canvas index 0, and a
/// half-bin phase correction is applied for even dimensions. Rotating or
/// scaling the image about its center therefore rotates or scales this
/// spectrum without introducing a phase ramp, which the phase-bearing
/// log-polar transforms rely on.
pub fn fft2_center_origin(img: &GrayImage, fft_size: usize) -> Result<Spectrum> {
    check_fft_size(img, fft_size)?;
    let n = fft_size;
    let (ox, oy) = (img.width() / 2, img.height() / 2);
    let mut buf = vec![Complex64::default(); n * n];
    for y in 0..img.height() {
        let cy = (y + n - oy) % n;
        for (x, &v) in img.row(y).iter().enumerate() {
            buf[cy * n + (x + n - ox) % n] = Complex64::new(v, 0.0);
        }
    }
    Fft2d::new(n, n).forward(&mut buf);
    let (cx, cy) = img.center();
    let (dx, dy) = (ox as f64 - cx, oy as f64 - cy);
    if dx != 0.0 || dy != 0.0 {
        let tau = -2.0 * std::f64::consts::PI / n as f64;
        let ramp_x: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(1.0, tau * signed_offset(i, n) as f64 * dx)).collect();
        let ramp_y: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(1.0, tau * signed_offset(i, n) as f64 * dy)).collect();
        for (r, row) in buf.chunks_exact_mut(n).enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v *= ramp_x[c] * ramp_y[r];
            }
        }
    }
    Ok(Spectrum::from_standard(n, buf, img.width().max(img.height())))
}

/// Output of [`phase_correlate`].
#[derive(Debug, Clone)]
pub struct PhaseCorrelation {
    /// Signed `(dx, dy)` that moves the first input onto the second.
    pub peak: (i64, i64),
    pub value: f64,
    /// Row-major correlation plane in FFT order (zero shift at index 0).
    pub plane: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

/// `conj(a) b / (|conj(a) b| + eps)`, `eps = 1e-12 * max |conj(a) b|`, written to `out`.
pub fn normalized_cross_power(a: &[Complex64], b: &[Complex64], out: &mut [Complex64]) -> Result<()> {
    let mut max = 0.0f64;
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = x.conj() * y;
        max = max.max(o.norm_sqr());
    }
    if max == 0.0 {
        return Err(Error::DegenerateInput("cross-power spectrum is identically zero"));
    }
    let eps = 1e-12 * max.sqrt();
    for o in out.iter_mut() {
        *o /= o.norm() + eps;
    }
    Ok(())
}

/// Returns the index of the largest value, the smallest index among ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Phase correlation of two equally sized spectra.
///
/// The peak sits at the shift `d` for which `b(x) = a(x - d)`; a circular
/// shift of `a` by `(5, -3)` peaks at `(5, -3)`.
pub fn phase_correlate(a: &Spectrum, b: &Spectrum) -> Result<PhaseCorrelation> {
    if a.size != b.size {
        return Err(Error::DimensionMismatch { expected: (a.size, a.size), actual: (b.size, b.size) });
    }
    if a.data.iter().all(|c| c.norm_sqr() == 0.0) || b.data.iter().all(|c| c.norm_sqr() == 0.0) {
        return Err(Error::DegenerateInput("spectrum is identically zero"));
    }
    let n = a.size;
    let (sa, sb) = (a.to_standard(), b.to_standard());
    let mut cross = vec![Complex64::default(); n * n];
    normalized_cross_power(&sa, &sb, &mut cross)?;
    Fft2d::new(n, n).inverse(&mut cross);
    let scale = 1.0 / (n * n) as f64;
    let plane: Vec<f64> = cross.iter().map(|c| c.re * scale).collect();
    let best = argmax(&plane);
    Ok(PhaseCorrelation {
        peak: (signed_offset(best % n, n), signed_offset(best / n, n)),
        value: plane[best],
        plane,
        rows: n,
        cols: n,
    })
}

//! Log-polar spectral transforms.
//!
//! A similarity warp `x -> s R(a) x` of an image turns into a translation
//! `(rho, alpha) -> (rho - ln s, alpha + a)` of its log-polar spectrum. The
//! magnitude-only map ([`classic_fm`]) is blind to pixel shifts; the
//! phase-bearing map ([`mfm`]) keeps them and is cropped along `rho` to bound
//! the cost of each correlation.

mod shifted;

pub use shifted::ShiftedLogPolar;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{GrayImage, Interval};
use crate::spectral::{argmax, fft2_center_origin, normalized_cross_power, signed_offset, Fft2d, Spectrum};

/// Angular extent of every grid; the other half-plane is its conjugate.
pub const ALPHA_SPAN: f64 = 180.0;
/// Largest relative scale step between adjacent rows of a resolving grid.
pub const SCALE_RESOLUTION: f64 = 0.002;
/// Largest angular step (degrees) of a resolving grid.
pub const ANGLE_RESOLUTION: f64 = 0.08;
/// Default fraction of the `rho` axis kept by the crop.
pub const DEFAULT_DELTA_RHO_FRACTION: f64 = 800.0 / 2896.0;

/// Sampling lattice of a log-polar spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogPolarGrid {
    pub n_rho: usize,
    pub n_alpha: usize,
    /// Log-radius of the first row, in log frequency bins.
    pub rho_min: f64,
    pub rho_max: f64,
    /// Degrees covered by the `n_alpha` columns.
    pub alpha_span: f64,
}

impl LogPolarGrid {
    pub fn new(n_rho: usize, n_alpha: usize, rho_min: f64, rho_max: f64) -> Result<Self> {
        if n_rho < 2 || n_alpha < 2 {
            return Err(Error::invalid(format!("log-polar grid needs at least 2x2 samples, got {n_rho}x{n_alpha}")));
        }
        if !(rho_min.is_finite() && rho_max.is_finite() && rho_min < rho_max) {
            return Err(Error::invalid(format!("log-polar grid needs rho_min < rho_max, got [{rho_min}, {rho_max}]")));
        }
        Ok(Self { n_rho, n_alpha, rho_min, rho_max, alpha_span: ALPHA_SPAN })
    }

    /// Grid that resolves [`SCALE_RESOLUTION`] and [`ANGLE_RESOLUTION`] over
    /// radii `N/8 .. N/2`. Used wherever parameters are read off the grid.
    pub fn fine(fft_size: usize) -> Result<Self> {
        let n = fft_size as f64;
        let (lo, hi) = ((n / 8.0).ln(), (n / 2.0).ln());
        let n_rho = ((hi - lo) / (1.0 + SCALE_RESOLUTION).ln()).ceil() as usize + 1;
        let n_alpha = (ALPHA_SPAN / ANGLE_RESOLUTION).ceil() as usize;
        Self::new(n_rho, n_alpha, lo, hi)
    }

    /// Coarse grid over radii `N/32 .. N/2` driving the shift search. Its
    /// coarse sampling widens the basin of the shift objective to a few pixels.
    pub fn search(fft_size: usize) -> Result<Self> {
        let n = fft_size as f64;
        Self::new(96, 128, (n / 32.0).ln(), (n / 2.0).ln())
    }

    /// Number of leading rows whose angular sample spacing `r * alpha_step`
    /// stays within one spectral bin; at least one. Beyond it the angular
    /// samples alias the spectrum.
    pub fn resolved_rows(&self) -> usize {
        let step = self.alpha_step().to_radians();
        (0..self.n_rho).take_while(|&i| self.rho(i).exp() * step <= 1.0).count().max(1)
    }

    pub fn rho_step(&self) -> f64 {
        (self.rho_max - self.rho_min) / (self.n_rho - 1) as f64
    }

    /// Degrees per column.
    pub fn alpha_step(&self) -> f64 {
        self.alpha_span / self.n_alpha as f64
    }

    pub fn rho(&self, i: usize) -> f64 {
        self.rho_min + i as f64 * self.rho_step()
    }

    pub fn alpha(&self, j: usize) -> f64 {
        j as f64 * self.alpha_step()
    }

    /// Whether adjacent rows differ in scale by at most [`SCALE_RESOLUTION`].
    pub fn resolves_scale(&self) -> bool {
        self.rho_step().exp() - 1.0 <= SCALE_RESOLUTION * (1.0 + 1e-9)
    }

    /// Number of rows kept for a crop covering `fraction` of the `rho` axis.
    pub fn rows_for_fraction(&self, fraction: f64) -> Result<usize> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::invalid(format!("delta-rho fraction must lie in (0, 1], got {fraction}")));
        }
        Ok(((fraction * self.n_rho as f64).round() as usize).clamp(1, self.n_rho))
    }

    /// First row of a `delta_rho`-row window centered on `center`, clamped
    /// into the grid.
    pub fn crop_start(&self, delta_rho: usize, center: usize) -> Result<usize> {
        if delta_rho == 0 || delta_rho > self.n_rho {
            return Err(Error::BadCrop { delta_rho, n_rho: self.n_rho });
        }
        if center >= self.n_rho {
            return Err(Error::invalid(format!("crop center {center} outside {} rows", self.n_rho)));
        }
        Ok(center.saturating_sub(delta_rho / 2).min(self.n_rho - delta_rho))
    }

    fn unit_directions(&self) -> Vec<(f64, f64)> {
        (0..self.n_alpha).map(|j| self.alpha(j).to_radians().sin_cos()).map(|(s, c)| (c, s)).collect()
    }
}

/// Complex log-polar samples, `rows x n_alpha`, row-major along `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPolarSpectrum {
    data: Vec<Complex64>,
    rows: usize,
    grid: LogPolarGrid,
    crop_offset: usize,
    // extent / (2 N) of the sampled spectrum.
    per_bin: f64,
}

/// Highest frequency (cycles per sample, along `rho` and `alpha`) that rows
/// `start .. start + rows` can carry when sampling a spectrum of the given
/// extent: one row or column step moves at most `r * step` bins, and the
/// spectrum varies at most `extent / (2 N)` cycles per bin.
fn sampled_band(grid: &LogPolarGrid, start: usize, rows: usize, per_bin: f64) -> (f64, f64) {
    let r_max = grid.rho(start + rows - 1).exp();
    let b_rho = r_max * grid.rho_step() * per_bin;
    let b_alpha = r_max * grid.alpha_step().to_radians() * per_bin;
    (b_rho.min(0.5), b_alpha.min(0.5))
}

fn per_bin(spec: &Spectrum) -> f64 {
    spec.extent() as f64 / (2.0 * spec.size() as f64)
}

impl LogPolarSpectrum {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.grid.n_alpha
    }

    pub fn grid(&self) -> &LogPolarGrid {
        &self.grid
    }

    /// Grid row of the first stored row.
    pub fn crop_offset(&self) -> usize {
        self.crop_offset
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.cols() + col]
    }

    /// Frequency band (cycles per sample along `rho`, `alpha`) carrying signal.
    pub fn band(&self) -> (f64, f64) {
        sampled_band(&self.grid, self.crop_offset, self.rows, self.per_bin)
    }

    pub fn row_energy(&self, row: usize) -> f64 {
        self.data[row * self.cols()..(row + 1) * self.cols()].iter().map(|c| c.norm_sqr()).sum()
    }

    /// Copy keeping `delta_rho` rows centered on grid row `center`.
    pub fn crop(&self, delta_rho: usize, center: usize) -> Result<Self> {
        if self.rows != self.grid.n_rho || self.crop_offset != 0 {
            return Err(Error::invalid("only an uncropped log-polar spectrum can be cropped"));
        }
        let start = self.grid.crop_start(delta_rho, center)?;
        let cols = self.cols();
        Ok(Self {
            data: self.data[start * cols..(start + delta_rho) * cols].to_vec(),
            rows: delta_rho,
            grid: self.grid,
            crop_offset: start,
            per_bin: self.per_bin,
        })
    }
}

/// Bilinear sample of a centered spectrum at fractional array position
/// `(x, y)`; bins outside the array count as zero.
fn bilinear(spec: &Spectrum, x: f64, y: f64) -> Complex64 {
    let n = spec.size() as isize;
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    let data = spec.data();
    let fetch = |xi: isize, yi: isize| {
        if xi < 0 || yi < 0 || xi >= n || yi >= n {
            Complex64::default()
        } else {
            data[(yi * n + xi) as usize]
        }
    };
    fetch(x0, y0) * ((1.0 - fx) * (1.0 - fy))
        + fetch(x0 + 1, y0) * (fx * (1.0 - fy))
        + fetch(x0, y0 + 1) * ((1.0 - fx) * fy)
        + fetch(x0 + 1, y0 + 1) * (fx * fy)
}

/// Log-polar samples of rows `start .. start + rows` of `grid`.
pub fn log_polar_rows(spec: &Spectrum, grid: &LogPolarGrid, start: usize, rows: usize) -> LogPolarSpectrum {
    assert!(start + rows <= grid.n_rho, "row range outside the grid");
    let h = (spec.size() / 2) as f64;
    let dirs = grid.unit_directions();
    let mut data = Vec::with_capacity(rows * grid.n_alpha);
    for i in start..start + rows {
        let r = grid.rho(i).exp();
        for &(c, s) in &dirs {
            data.push(bilinear(spec, h + r * c, h + r * s));
        }
    }
    LogPolarSpectrum { data, rows, grid: *grid, crop_offset: start, per_bin: per_bin(spec) }
}

/// Full log-polar map of a centered spectrum over `alpha` in `[0, 180)`.
pub fn log_polar_map(spec: &Spectrum, grid: &LogPolarGrid) -> LogPolarSpectrum {
    log_polar_rows(spec, grid, 0, grid.n_rho)
}

/// Magnitude-only Fourier-Mellin transform.
pub fn classic_fm(img: &GrayImage, fft_size: usize, grid: &LogPolarGrid) -> Result<LogPolarSpectrum> {
    let spec = fft2_center_origin(img, fft_size)?;
    Ok(log_polar_map(&spec.magnitude(), grid))
}

/// Phase-bearing log-polar transform of a spectrum, keeping `delta_rho` rows
/// centered on `crop_center`.
pub fn mfm_of_spectrum(spec: &Spectrum, grid: &LogPolarGrid, delta_rho: usize, crop_center: usize) -> Result<LogPolarSpectrum> {
    let start = grid.crop_start(delta_rho, crop_center)?;
    Ok(log_polar_rows(spec, grid, start, delta_rho))
}

/// Phase-bearing, `rho`-cropped Fourier-Mellin transform of an image.
pub fn mfm(img: &GrayImage, fft_size: usize, grid: &LogPolarGrid, delta_rho: usize, crop_center: usize) -> Result<LogPolarSpectrum> {
    grid.crop_start(delta_rho, crop_center)?;
    mfm_of_spectrum(&fft2_center_origin(img, fft_size)?, grid, delta_rho, crop_center)
}

/// Grid row with the largest energy summed over `alpha`; ties go to the smaller row.
pub fn crop_center_from_fingerprint(k_lp: &LogPolarSpectrum) -> usize {
    let energies: Vec<f64> = (0..k_lp.rows()).map(|i| k_lp.row_energy(i)).collect();
    k_lp.crop_offset() + argmax(&energies)
}

/// [`crop_center_from_fingerprint`] restricted to the rows that
/// [`LogPolarGrid::resolved_rows`] admits.
pub fn resolved_crop_center(k_lp: &LogPolarSpectrum) -> usize {
    let first = k_lp.crop_offset();
    let end = k_lp.grid().resolved_rows().clamp(first + 1, first + k_lp.rows());
    let energies: Vec<f64> = (first..end).map(|i| k_lp.row_energy(i - first)).collect();
    first + argmax(&energies)
}

/// Closed-form scale and rotation of one log-polar correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRotation {
    pub scale: f64,
    /// Degrees, in `(-90, 90]`.
    pub angle: f64,
    /// Correlation peak value.
    pub peak: f64,
    /// Subpixel lag `(rho rows, alpha columns)` of the peak.
    pub lag: (f64, f64),
}

/// Inclusive lag bounds searched for the correlation peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagWindow {
    pub rho: (i64, i64),
    pub alpha: (i64, i64),
}

impl LagWindow {
    /// Every lag of a `rows x cols` plane.
    pub fn full(rows: usize, cols: usize) -> Self {
        Self { rho: (-(rows as i64 / 2), (rows as i64 - 1) / 2), alpha: (-(cols as i64 / 2), (cols as i64 - 1) / 2) }
    }

    /// Lags whose scale and angle fall inside the given ranges, rounded outward.
    pub fn from_ranges(grid: &LogPolarGrid, rows: usize, scale: Interval, angle: Interval) -> Self {
        let full = Self::full(rows, grid.n_alpha);
        let step = grid.rho_step();
        let rho = ((-scale.hi.ln() / step).floor() as i64, (-scale.lo.ln() / step).ceil() as i64);
        let da = grid.alpha_step();
        let alpha = ((angle.lo / da).floor() as i64, (angle.hi / da).ceil() as i64);
        let fit = |(lo, hi): (i64, i64), (flo, fhi): (i64, i64)| {
            if hi - lo >= fhi - flo {
                (flo, fhi)
            } else {
                (lo.max(flo), hi.min(fhi))
            }
        };
        Self { rho: fit(rho, full.rho), alpha: fit(alpha, full.alpha) }
    }
}

/// Reusable FFT plan for band-limited phase correlation of `rows x cols`
/// log-polar arrays.
///
/// The normalized cross-power spectrum is kept only inside the band the
/// samples can carry. Outside it an oversampled grid holds nothing but
/// interpolation residue, which sits at the same grid positions in both
/// operands and would otherwise pull the peak towards zero lag.
#[derive(Debug, Clone)]
pub struct LogPolarCorrelator {
    fft: Fft2d,
    rows: usize,
    cols: usize,
    // Transposed layout, like the spectra.
    mask: Vec<bool>,
    kept: usize,
}

impl LogPolarCorrelator {
    /// `band` is the per-axis cutoff in cycles per sample; at least the
    /// first harmonic of each axis is always kept.
    pub fn new(rows: usize, cols: usize, band: (f64, f64)) -> Self {
        let limit = |b: f64, n: usize| ((b * n as f64).floor() as i64).max(1);
        let (lr, la) = (limit(band.0, rows), limit(band.1, cols));
        let mut mask = vec![false; rows * cols];
        for c in 0..cols {
            for r in 0..rows {
                mask[c * rows + r] = signed_offset(r, rows).abs() <= lr && signed_offset(c, cols).abs() <= la;
            }
        }
        let kept = mask.iter().filter(|&&m| m).count();
        Self { fft: Fft2d::new(rows, cols), rows, cols, mask, kept }
    }

    /// Correlator sized and band-limited for a pair of log-polar spectra.
    pub fn for_pair(a: &LogPolarSpectrum, b: &LogPolarSpectrum) -> Self {
        let (ba, bb) = (a.band(), b.band());
        Self::new(a.rows(), a.cols(), (ba.0.max(bb.0), ba.1.max(bb.1)))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Transposed spectrum of a log-polar array, the operand of [`Self::correlate`].
    pub fn spectrum(&self, samples: &[Complex64]) -> Vec<Complex64> {
        let mut buf = samples.to_vec();
        let mut out = vec![Complex64::default(); buf.len()];
        self.fft.forward_t(&mut buf, &mut out);
        out
    }

    /// Correlation plane (standard layout, zero lag at index 0) whose peak sits
    /// at the lag `d` with `w(x) = k(x - d)`.
    pub fn plane(&self, k_spec: &[Complex64], w_spec: &[Complex64]) -> Result<Vec<f64>> {
        let mut cross = vec![Complex64::default(); k_spec.len()];
        normalized_cross_power(k_spec, w_spec, &mut cross)?;
        for (c, &keep) in cross.iter_mut().zip(&self.mask) {
            if !keep {
                *c = Complex64::default();
            }
        }
        let mut out = vec![Complex64::default(); cross.len()];
        self.fft.inverse_t(&mut cross, &mut out);
        let norm = 1.0 / self.kept as f64;
        Ok(out.iter().map(|c| c.re * norm).collect())
    }

    /// Peak of the correlation plane inside `window`, refined per axis.
    pub fn correlate(&self, k_spec: &[Complex64], w_spec: &[Complex64], grid: &LogPolarGrid, window: &LagWindow) -> Result<ScaleRotation> {
        let plane = self.plane(k_spec, w_spec)?;
        Ok(self.peak(&plane, grid, window))
    }

    fn index(&self, dr: i64, da: i64) -> usize {
        let r = dr.rem_euclid(self.rows as i64) as usize;
        let a = da.rem_euclid(self.cols as i64) as usize;
        r * self.cols + a
    }

    fn peak(&self, plane: &[f64], grid: &LogPolarGrid, window: &LagWindow) -> ScaleRotation {
        let mut best = (window.rho.0, window.alpha.0);
        let mut best_value = f64::NEG_INFINITY;
        for dr in window.rho.0..=window.rho.1 {
            for da in window.alpha.0..=window.alpha.1 {
                let v = plane[self.index(dr, da)];
                if v > best_value {
                    best_value = v;
                    best = (dr, da);
                }
            }
        }
        let (dr, da) = best;
        let sub_r = if self.rows >= 3 {
            parabolic(plane[self.index(dr - 1, da)], best_value, plane[self.index(dr + 1, da)])
        } else {
            0.0
        };
        let sub_a = if self.cols >= 3 {
            parabolic(plane[self.index(dr, da - 1)], best_value, plane[self.index(dr, da + 1)])
        } else {
            0.0
        };
        let lag = (dr as f64 + sub_r, da as f64 + sub_a);
        let mut angle = lag.1 * grid.alpha_step();
        if angle <= -90.0 {
            angle += 180.0;
        } else if angle > 90.0 {
            angle -= 180.0;
        }
        ScaleRotation { scale: (-lag.0 * grid.rho_step()).exp(), angle, peak: best_value, lag }
    }
}

/// Vertex offset of the parabola through three equally spaced samples, in `[-0.5, 0.5]`.
fn parabolic(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom < 0.0 {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

fn check_pair(w_lp: &LogPolarSpectrum, k_lp: &LogPolarSpectrum) -> Result<()> {
    if w_lp.grid != k_lp.grid || w_lp.rows != k_lp.rows || w_lp.crop_offset != k_lp.crop_offset {
        return Err(Error::DimensionMismatch { expected: (k_lp.cols(), k_lp.rows), actual: (w_lp.cols(), w_lp.rows) });
    }
    Ok(())
}

/// Scale and rotation taking `k_lp`'s image onto `w_lp`'s, searched over every lag.
pub fn estimate_scale_rotation(w_lp: &LogPolarSpectrum, k_lp: &LogPolarSpectrum) -> Result<ScaleRotation> {
    estimate_scale_rotation_within(w_lp, k_lp, &LagWindow::full(k_lp.rows(), k_lp.cols()))
}

/// [`estimate_scale_rotation`] with the peak restricted to `window`.
pub fn estimate_scale_rotation_within(w_lp: &LogPolarSpectrum, k_lp: &LogPolarSpectrum, window: &LagWindow) -> Result<ScaleRotation> {
    check_pair(w_lp, k_lp)?;
    let corr = LogPolarCorrelator::for_pair(w_lp, k_lp);
    corr.correlate(&corr.spectrum(k_lp.data()), &corr.spectrum(w_lp.data()), &k_lp.grid, window)
}

#[cfg(test)]
mod tests;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::imgcore::{GrayImage, SearchRanges};
use crate::mellin::{
    log_polar_map, log_polar_rows, LagWindow, LogPolarCorrelator, LogPolarGrid, LogPolarSpectrum,
    resolved_crop_center, ScaleRotation, ShiftedLogPolar,
};
use crate::spectral::{fft2_center_origin, Spectrum};

/// Smallest power of two holding twice the larger image dimension, so that
/// circular effects of the spectral products stay off the image support.
pub fn fft_size_for(width: usize, height: usize) -> usize {
    (2 * width.max(height)).next_power_of_two()
}

/// One log-polar band: its grid, the cropped rows and the correlator for them.
#[derive(Debug, Clone)]
struct Band {
    grid: LogPolarGrid,
    start: usize,
    rows: usize,
    correlator: LogPolarCorrelator,
}

impl Band {
    fn new(k_spec: &Spectrum, grid: LogPolarGrid, fraction: f64) -> Result<Self> {
        let rows = grid.rows_for_fraction(fraction)?;
        let center = resolved_crop_center(&log_polar_map(k_spec, &grid));
        let start = grid.crop_start(rows, center)?;
        let band = log_polar_rows(k_spec, &grid, start, rows).band();
        Ok(Self { grid, start, rows, correlator: LogPolarCorrelator::new(rows, grid.n_alpha, band) })
    }

    fn window(&self, ranges: &SearchRanges) -> LagWindow {
        LagWindow::from_ranges(&self.grid, self.rows, ranges.scale, ranges.angle)
    }
}

/// Everything about a reference fingerprint that does not depend on the
/// frame: the cropped bands and their shift stencils.
#[derive(Debug, Clone)]
pub struct ReferenceContext {
    fingerprint: GrayImage,
    dims: (usize, usize),
    fft_size: usize,
    delta_rho_fraction: f64,
    search: Band,
    fine: Band,
    stencil: ShiftedLogPolar,
    fine_stencil: ShiftedLogPolar,
}

impl ReferenceContext {
    /// Default bands: [`LogPolarGrid::search`] for the shift search and
    /// [`LogPolarGrid::fine`] for reading off scale and rotation, both
    /// cropped to `delta_rho_fraction` of their rows around the energy peak
    /// of the fingerprint's log-polar spectrum. Only rows whose angular
    /// sampling is resolved compete for the peak.
    pub fn new(k: &GrayImage, delta_rho_fraction: f64) -> Result<Self> {
        let fft_size = fft_size_for(k.width(), k.height());
        Self::with_grids(k, delta_rho_fraction, LogPolarGrid::search(fft_size)?, LogPolarGrid::fine(fft_size)?)
    }

    pub fn with_grids(k: &GrayImage, delta_rho_fraction: f64, search: LogPolarGrid, fine: LogPolarGrid) -> Result<Self> {
        if k.energy() == 0.0 {
            return Err(Error::DegenerateInput("fingerprint has zero energy"));
        }
        let fft_size = fft_size_for(k.width(), k.height());
        let spectrum = fft2_center_origin(k, fft_size)?;
        let search = Band::new(&spectrum, search, delta_rho_fraction)?;
        let fine = Band::new(&spectrum, fine, delta_rho_fraction)?;
        let stencil = ShiftedLogPolar::new(&spectrum, &search.grid, search.start, search.rows);
        let fine_stencil = ShiftedLogPolar::new(&spectrum, &fine.grid, fine.start, fine.rows);
        Ok(Self { fingerprint: k.clone(), dims: k.dims(), fft_size, delta_rho_fraction, search, fine, stencil, fine_stencil })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn fingerprint(&self) -> &GrayImage {
        &self.fingerprint
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn delta_rho_fraction(&self) -> f64 {
        self.delta_rho_fraction
    }

    /// `(grid, first row, rows)` of the band driving the shift search.
    pub fn search_band(&self) -> (LogPolarGrid, usize, usize) {
        (self.search.grid, self.search.start, self.search.rows)
    }

    /// `(grid, first row, rows)` of the band used for the final estimate.
    pub fn fine_band(&self) -> (LogPolarGrid, usize, usize) {
        (self.fine.grid, self.fine.start, self.fine.rows)
    }
}

/// Result of one evaluation of the shift objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fitness {
    /// Phase-correlation peak inside the scale/angle window.
    pub value: f64,
    pub scale: f64,
    pub angle: f64,
}

impl From<ScaleRotation> for Fitness {
    fn from(e: ScaleRotation) -> Self {
        Self { value: e.peak, scale: e.scale, angle: e.angle }
    }
}

/// A frame residual paired with a reference: the residual's transforms are
/// computed once and each shift candidate only re-samples the fingerprint.
#[derive(Debug)]
pub struct FitnessContext<'a> {
    reference: &'a ReferenceContext,
    residual: GrayImage,
    ranges: SearchRanges,
    search_window: LagWindow,
    fine_window: LagWindow,
    w_search: Vec<Complex64>,
    w_fine: Vec<Complex64>,
}

impl<'a> FitnessContext<'a> {
    pub fn new(reference: &'a ReferenceContext, residual: &GrayImage, ranges: &SearchRanges) -> Result<Self> {
        ranges.validate()?;
        if residual.dims() != reference.dims {
            return Err(Error::DimensionMismatch { expected: reference.dims, actual: residual.dims() });
        }
        if residual.energy() == 0.0 {
            return Err(Error::DegenerateInput("residual has zero energy"));
        }
        let spec = fft2_center_origin(residual, reference.fft_size)?;
        let lp = |b: &Band| -> LogPolarSpectrum { log_polar_rows(&spec, &b.grid, b.start, b.rows) };
        let w_search = reference.search.correlator.spectrum(lp(&reference.search).data());
        let w_fine = reference.fine.correlator.spectrum(lp(&reference.fine).data());
        Ok(Self {
            reference,
            residual: residual.clone(),
            ranges: *ranges,
            search_window: reference.search.window(ranges),
            fine_window: reference.fine.window(ranges),
            w_search,
            w_fine,
        })
    }

    pub fn ranges(&self) -> &SearchRanges {
        &self.ranges
    }

    pub fn reference(&self) -> &ReferenceContext {
        self.reference
    }

    pub fn residual(&self) -> &GrayImage {
        &self.residual
    }

    /// Objective of the shift search at integer shift `c`: the fingerprint is
    /// translated by `c` before the log-polar transform, and the correlation
    /// peak with the residual is searched over the configured scale and angle
    /// ranges.
    pub fn fitness(&self, c: (i32, i32)) -> Result<Fitness> {
        let band = &self.reference.search;
        let mut samples = vec![Complex64::default(); self.reference.stencil.len()];
        self.reference.stencil.sample_into(c, &mut samples);
        let k_spec = band.correlator.spectrum(&samples);
        Ok(band.correlator.correlate(&k_spec, &self.w_search, &band.grid, &self.search_window)?.into())
    }

    /// Scale and rotation read off the fine band with the fingerprint
    /// translated by `c`.
    pub fn estimate_at(&self, c: (i32, i32)) -> Result<ScaleRotation> {
        let band = &self.reference.fine;
        let mut samples = vec![Complex64::default(); self.reference.fine_stencil.len()];
        self.reference.fine_stencil.sample_into(c, &mut samples);
        let k_spec = band.correlator.spectrum(&samples);
        band.correlator.correlate(&k_spec, &self.w_fine, &band.grid, &self.fine_window)
    }
}

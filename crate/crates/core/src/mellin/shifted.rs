use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::{LogPolarGrid, LogPolarSpectrum};
use crate::spectral::Spectrum;

#[derive(Debug, Clone, Copy)]
struct Tap {
    ix: u32,
    iy: u32,
    // Bilinear weights already multiplied into the four neighbor bins.
    w: [Complex64; 4],
}

/// Log-polar rows of a spectrum whose input is translated by an integer
/// shift, evaluated without re-running the 2D FFT.
///
/// A translation by `c` multiplies bin `k` by `exp(-2 pi i k.c / N)`. The
/// four bins of a bilinear footprint share the factor of its corner bin, so
/// each sample costs a handful of complex products against a pair of
/// per-shift phase tables. Results equal [`super::log_polar_rows`] over
/// `spec.translated(cx, cy)` up to round-off.
#[derive(Debug, Clone)]
pub struct ShiftedLogPolar {
    size: usize,
    grid: LogPolarGrid,
    start: usize,
    rows: usize,
    taps: Vec<Tap>,
    // Table positions touched by the taps; tap indices are relative to `lo`.
    span_x: (i64, i64),
    span_y: (i64, i64),
    per_bin: f64,
}

impl ShiftedLogPolar {
    pub fn new(spec: &Spectrum, grid: &LogPolarGrid, start: usize, rows: usize) -> Self {
        assert!(start + rows <= grid.n_rho, "row range outside the grid");
        let n = spec.size();
        let h = (n / 2) as f64;
        let dirs = grid.unit_directions();
        let data = spec.data();
        let bin = |xi: i64, yi: i64| {
            if xi < 0 || yi < 0 || xi >= n as i64 || yi >= n as i64 {
                Complex64::default()
            } else {
                data[yi as usize * n + xi as usize]
            }
        };
        let mut taps = Vec::with_capacity(rows * grid.n_alpha);
        let mut live = Vec::with_capacity(rows * grid.n_alpha);
        for i in start..start + rows {
            let r = grid.rho(i).exp();
            for &(c, s) in &dirs {
                let (x, y) = (h + r * c, h + r * s);
                let (x0, y0) = (x.floor(), y.floor());
                let (fx, fy) = (x - x0, y - y0);
                let (x0, y0) = (x0 as i64, y0 as i64);
                if x0 < -1 || y0 < -1 || x0 >= n as i64 || y0 >= n as i64 {
                    taps.push(Tap { ix: 0, iy: 0, w: [Complex64::default(); 4] });
                    live.push(false);
                    continue;
                }
                let w = [
                    bin(x0, y0) * ((1.0 - fx) * (1.0 - fy)),
                    bin(x0 + 1, y0) * (fx * (1.0 - fy)),
                    bin(x0, y0 + 1) * ((1.0 - fx) * fy),
                    bin(x0 + 1, y0 + 1) * (fx * fy),
                ];
                // Tables are indexed by array position + 1 so that x0 = -1 fits.
                taps.push(Tap { ix: (x0 + 1) as u32, iy: (y0 + 1) as u32, w });
                live.push(true);
            }
        }
        let span = |f: fn(&Tap) -> u32| {
            let it = taps.iter().zip(&live).filter(|(_, &l)| l).map(|(t, _)| f(t) as i64);
            (it.clone().min().unwrap_or(0), it.max().unwrap_or(0))
        };
        let (span_x, span_y) = (span(|t| t.ix), span(|t| t.iy));
        for (t, &l) in taps.iter_mut().zip(&live) {
            // Dead taps carry zero weights; any in-span index will do.
            let (x, y) = if l { (t.ix as i64, t.iy as i64) } else { (span_x.0, span_y.0) };
            t.ix = (x - span_x.0) as u32;
            t.iy = (y - span_y.0) as u32;
        }
        Self { size: n, grid: *grid, start, rows, taps, span_x, span_y, per_bin: super::per_bin(spec) }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn grid(&self) -> &LogPolarGrid {
        &self.grid
    }

    pub fn band(&self) -> (f64, f64) {
        super::sampled_band(&self.grid, self.start, self.rows, self.per_bin)
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    // exp(-2 pi i k d / N) for array positions p in `span` (offset by one), k = p - N/2.
    fn phase_table(&self, d: i32, span: (i64, i64)) -> Vec<Complex64> {
        let n = self.size as i64;
        let tau = -2.0 * PI / self.size as f64;
        // k d is reduced modulo N first so the angle stays small and exact.
        (span.0 - 1..=span.1 - 1).map(|p| Complex64::from_polar(1.0, tau * ((p - n / 2) * d as i64).rem_euclid(n) as f64)).collect()
    }

    /// Writes the samples for shift `(cx, cy)` into `out` (row-major, `rows x n_alpha`).
    pub fn sample_into(&self, shift: (i32, i32), out: &mut [Complex64]) {
        assert_eq!(out.len(), self.taps.len());
        let (cx, cy) = shift;
        let (ex, ey) = (self.phase_table(cx, self.span_x), self.phase_table(cy, self.span_y));
        let e1x = Complex64::from_polar(1.0, -2.0 * PI * cx as f64 / self.size as f64);
        let e1y = Complex64::from_polar(1.0, -2.0 * PI * cy as f64 / self.size as f64);
        let e1xy = e1x * e1y;
        for (o, t) in out.iter_mut().zip(&self.taps) {
            let inner = t.w[0] + t.w[1] * e1x + t.w[2] * e1y + t.w[3] * e1xy;
            *o = ex[t.ix as usize] * ey[t.iy as usize] * inner;
        }
    }

    pub fn sample(&self, shift: (i32, i32)) -> LogPolarSpectrum {
        let mut data = vec![Complex64::default(); self.taps.len()];
        self.sample_into(shift, &mut data);
        LogPolarSpectrum { data, rows: self.rows, grid: self.grid, crop_offset: self.start, per_bin: self.per_bin }
    }
}

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned 2D complex FFT over a row-major `rows x cols` buffer.
///
/// The `*_t` variants keep the spectrum transposed (`cols x rows`), which
/// saves a transpose when the spectrum is only multiplied pointwise before
/// being inverted again.
#[derive(Clone)]
pub struct Fft2d {
    rows: usize,
    cols: usize,
    fwd_row: Arc<dyn Fft<f64>>,
    fwd_col: Arc<dyn Fft<f64>>,
    inv_row: Arc<dyn Fft<f64>>,
    inv_col: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl std::fmt::Debug for Fft2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2d").field("rows", &self.rows).field("cols", &self.cols).finish()
    }
}

impl Fft2d {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd_row = planner.plan_fft_forward(cols);
        let fwd_col = planner.plan_fft_forward(rows);
        let inv_row = planner.plan_fft_inverse(cols);
        let inv_col = planner.plan_fft_inverse(rows);
        let scratch_len = [&fwd_row, &fwd_col, &inv_row, &inv_col]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self { rows, cols, fwd_row, fwd_col, inv_row, inv_col, scratch_len }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Forward transform in place (standard layout in, standard layout out).
    pub fn forward(&self, data: &mut [Complex64]) {
        let mut tmp = vec![Complex64::default(); data.len()];
        self.forward_t(data, &mut tmp);
        transpose(&tmp, data, self.cols, self.rows);
    }

    /// Unnormalized inverse transform in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        let mut tmp = vec![Complex64::default(); data.len()];
        transpose(data, &mut tmp, self.rows, self.cols);
        self.inverse_t(&mut tmp, data);
    }

    /// Forward transform of `data` (destroyed); the spectrum is written
    /// transposed into `out`.
    pub fn forward_t(&self, data: &mut [Complex64], out: &mut [Complex64]) {
        assert_eq!(data.len(), self.len());
        let mut scratch = vec![Complex64::default(); self.scratch_len];
        self.fwd_row.process_with_scratch(data, &mut scratch);
        transpose(data, out, self.rows, self.cols);
        self.fwd_col.process_with_scratch(out, &mut scratch);
    }

    /// Unnormalized inverse of a transposed spectrum (`spec_t`, destroyed);
    /// the signal is written in standard layout into `out`.
    pub fn inverse_t(&self, spec_t: &mut [Complex64], out: &mut [Complex64]) {
        assert_eq!(spec_t.len(), self.len());
        let mut scratch = vec![Complex64::default(); self.scratch_len];
        self.inv_col.process_with_scratch(spec_t, &mut scratch);
        transpose(spec_t, out, self.cols, self.rows);
        self.inv_row.process_with_scratch(out, &mut scratch);
    }
}

/// Transposes a row-major `rows x cols` matrix into `dst` (`cols x rows`).
pub fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 32;
    debug_assert_eq!(src.len(), rows * cols);
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Swaps quadrants so that index 0 moves to the center (`fftshift`).
pub fn fftshift(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let (hr, hc) = (rows / 2, cols / 2);
    let mut out = vec![Complex64::default(); data.len()];
    for r in 0..rows {
        let rr = (r + hr) % rows;
        for c in 0..cols {
            out[rr * cols + (c + hc) % cols] = data[r * cols + c];
        }
    }
    out
}

/// Inverse of [`fftshift`].
pub fn ifftshift(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let (hr, hc) = (rows - rows / 2, cols - cols / 2);
    let mut out = vec![Complex64::default(); data.len()];
    for r in 0..rows {
        let rr = (r + hr) % rows;
        for c in 0..cols {
            out[rr * cols + (c + hc) % cols] = data[r * cols + c];
        }
    }
    out
}

/// Maps a circular index to a signed offset in `[-n/2, n/2)`.
#[inline]
pub fn signed_offset(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

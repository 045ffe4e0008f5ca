//! Separable 2D discrete wavelet transform with half-sample symmetric
//! extension, 8-tap Daubechies filters.

/// Daubechies decomposition low-pass filter with 8 taps (4 vanishing moments).
pub const DB8_LO: [f64; 8] = [
    -0.010597401784997278,
    0.032883011666982945,
    0.030841381835986965,
    -0.18703481171888114,
    -0.02798376941698385,
    0.6308807679295904,
    0.7148465705525415,
    0.23037781330885523,
];

#[derive(Debug, Clone)]
pub struct Filters {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Filters {
    /// Orthonormal pair built from a low-pass filter: `hi[k] = (-1)^(k+1) lo[F-1-k]`.
    pub fn orthonormal(lo: &[f64]) -> Self {
        let f = lo.len();
        let hi = (0..f).map(|k| if k % 2 == 0 { -lo[f - 1 - k] } else { lo[f - 1 - k] }).collect();
        Self { lo: lo.to_vec(), hi }
    }

    pub fn db8() -> Self {
        Self::orthonormal(&DB8_LO)
    }

    fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn coeff_len(&self, n: usize) -> usize {
        (n + self.len() - 1) / 2
    }
}

#[inline]
fn reflect(m: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = m.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// One analysis step along a 1D signal: `(approx, detail)`.
fn analyze(f: &Filters, x: &[f64], approx: &mut [f64], detail: &mut [f64]) {
    let taps = f.len();
    for i in 0..approx.len() {
        let n = (2 * i + 1) as isize;
        let (mut a, mut d) = (0.0, 0.0);
        for k in 0..taps {
            let v = x[reflect(n - k as isize, x.len())];
            a += f.lo[k] * v;
            d += f.hi[k] * v;
        }
        approx[i] = a;
        detail[i] = d;
    }
}

/// Inverse of [`analyze`] for an output of length `out.len()`.
fn synthesize(f: &Filters, approx: &[f64], detail: &[f64], out: &mut [f64]) {
    let taps = f.len() as isize;
    for (m, o) in out.iter_mut().enumerate() {
        let m = m as isize;
        // Coefficients i with 0 <= 2i + 1 - m <= taps - 1.
        let i_lo = m.div_euclid(2);
        let i_hi = ((m + taps - 2).div_euclid(2)).min(approx.len() as isize - 1);
        let mut acc = 0.0;
        for i in i_lo..=i_hi {
            let k = 2 * i + 1 - m;
            if (0..taps).contains(&k) {
                acc += approx[i as usize] * f.lo[k as usize] + detail[i as usize] * f.hi[k as usize];
            }
        }
        *o = acc;
    }
}

/// Row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }
}

/// Detail subbands of one decomposition level.
#[derive(Debug, Clone)]
pub struct Level {
    pub horizontal: Plane,
    pub vertical: Plane,
    pub diagonal: Plane,
    /// Size of the approximation this level was computed from.
    pub source: (usize, usize),
}

impl Level {
    pub fn details_mut(&mut self) -> [&mut Plane; 3] {
        [&mut self.horizontal, &mut self.vertical, &mut self.diagonal]
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub approx: Plane,
    /// Finest level first.
    pub levels: Vec<Level>,
}

fn transform_rows(f: &Filters, src: &Plane) -> (Plane, Plane) {
    let m = f.coeff_len(src.width);
    let (mut lo, mut hi) = (Plane::zeros(m, src.height), Plane::zeros(m, src.height));
    for y in 0..src.height {
        analyze(
            f,
            &src.data[y * src.width..(y + 1) * src.width],
            &mut lo.data[y * m..(y + 1) * m],
            &mut hi.data[y * m..(y + 1) * m],
        );
    }
    (lo, hi)
}

fn transform_cols(f: &Filters, src: &Plane) -> (Plane, Plane) {
    let m = f.coeff_len(src.height);
    let (mut lo, mut hi) = (Plane::zeros(src.width, m), Plane::zeros(src.width, m));
    let mut col = vec![0.0; src.height];
    let (mut a, mut d) = (vec![0.0; m], vec![0.0; m]);
    for x in 0..src.width {
        for (y, c) in col.iter_mut().enumerate() {
            *c = src.data[y * src.width + x];
        }
        analyze(f, &col, &mut a, &mut d);
        for i in 0..m {
            lo.data[i * src.width + x] = a[i];
            hi.data[i * src.width + x] = d[i];
        }
    }
    (lo, hi)
}

fn inverse_cols(f: &Filters, lo: &Plane, hi: &Plane, height: usize) -> Plane {
    let mut out = Plane::zeros(lo.width, height);
    let (mut a, mut d) = (vec![0.0; lo.height], vec![0.0; lo.height]);
    let mut col = vec![0.0; height];
    for x in 0..lo.width {
        for i in 0..lo.height {
            a[i] = lo.data[i * lo.width + x];
            d[i] = hi.data[i * lo.width + x];
        }
        synthesize(f, &a, &d, &mut col);
        for (y, &v) in col.iter().enumerate() {
            out.data[y * lo.width + x] = v;
        }
    }
    out
}

fn inverse_rows(f: &Filters, lo: &Plane, hi: &Plane, width: usize) -> Plane {
    let mut out = Plane::zeros(width, lo.height);
    for y in 0..lo.height {
        synthesize(
            f,
            &lo.data[y * lo.width..(y + 1) * lo.width],
            &hi.data[y * lo.width..(y + 1) * lo.width],
            &mut out.data[y * width..(y + 1) * width],
        );
    }
    out
}

pub fn decompose(f: &Filters, img: Plane, levels: usize) -> Decomposition {
    let mut approx = img;
    let mut out = Vec::with_capacity(levels);
    for _ in 0..levels {
        let source = (approx.width, approx.height);
        let (row_lo, row_hi) = transform_rows(f, &approx);
        let (ll, lh) = transform_cols(f, &row_lo);
        let (hl, hh) = transform_cols(f, &row_hi);
        out.push(Level { horizontal: lh, vertical: hl, diagonal: hh, source });
        approx = ll;
    }
    Decomposition { approx, levels: out }
}

pub fn reconstruct(f: &Filters, dec: &Decomposition) -> Plane {
    let mut approx = dec.approx.clone();
    for level in dec.levels.iter().rev() {
        let (w, h) = level.source;
        let row_lo = inverse_cols(f, &approx, &level.horizontal, h);
        let row_hi = inverse_cols(f, &level.vertical, &level.diagonal, h);
        approx = inverse_rows(f, &row_lo, &row_hi, w);
    }
    approx
}

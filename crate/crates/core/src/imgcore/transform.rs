use serde::{Deserialize, Serialize};

use super::GrayImage;
use crate::error::{Error, Result};

/// Similarity transform `y - p_out = s R(angle) (x - p_in) + shift`, pivoting
/// about the image centers `p_in`, `p_out`.
///
/// Positive `shift_x` moves content to the right, positive `shift_y` moves it
/// down. The angle is in degrees, normalized to (-180, 180].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    pub scale: f64,
    pub angle: f64,
    pub shift_x: f64,
    pub shift_y: f64,
}

impl SimilarityParams {
    pub const IDENTITY: Self = Self { scale: 1.0, angle: 0.0, shift_x: 0.0, shift_y: 0.0 };

    pub fn new(scale: f64, angle: f64, shift_x: f64, shift_y: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("scale must be positive and finite, got {scale}")));
        }
        if !(angle.is_finite() && shift_x.is_finite() && shift_y.is_finite()) {
            return Err(Error::invalid("similarity parameters must be finite"));
        }
        Ok(Self { scale, angle: normalize_angle(angle), shift_x, shift_y })
    }

    pub fn angle_rad(&self) -> f64 {
        self.angle.to_radians()
    }

    /// `[[s cos a, -s sin a, cx], [s sin a, s cos a, cy]]`.
    pub fn to_matrix(&self) -> [[f64; 3]; 2] {
        let (sin, cos) = exact_sin_cos(self.angle);
        let (a, b) = (self.scale * cos, self.scale * sin);
        [[a, -b, self.shift_x], [b, a, self.shift_y]]
    }

    pub fn from_matrix(m: &[[f64; 3]; 2]) -> Result<Self> {
        let scale = m[0][0].hypot(m[1][0]);
        let angle = m[1][0].atan2(m[0][0]).to_degrees();
        Self::new(scale, angle, m[0][2], m[1][2])
    }

    pub fn invert(&self) -> Self {
        let inv_scale = 1.0 / self.scale;
        let (sin, cos) = exact_sin_cos(-self.angle);
        let (a, b) = (inv_scale * cos, inv_scale * sin);
        Self {
            scale: inv_scale,
            angle: normalize_angle(-self.angle),
            shift_x: -(a * self.shift_x - b * self.shift_y),
            shift_y: -(b * self.shift_x + a * self.shift_y),
        }
    }

    /// Maps a point given relative to the input center to a point relative to
    /// the output center.
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = self.to_matrix();
        (m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2])
    }
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Matrix of `first` followed by `second`.
pub fn compose(second: &[[f64; 3]; 2], first: &[[f64; 3]; 2]) -> [[f64; 3]; 2] {
    let mut out = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            out[r][c] = second[r][0] * first[0][c] + second[r][1] * first[1][c];
        }
        out[r][2] += second[r][2];
    }
    out
}

pub(crate) fn normalize_angle(deg: f64) -> f64 {
    let mut a = deg % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

// Exact values on the axis-aligned angles so that quarter turns stay exact.
fn exact_sin_cos(deg: f64) -> (f64, f64) {
    match normalize_angle(deg) {
        0.0 => (0.0, 1.0),
        90.0 => (1.0, 0.0),
        180.0 => (0.0, -1.0),
        -90.0 => (-1.0, 0.0),
        a => a.to_radians().sin_cos(),
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::invalid(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    /// Integer lattice points inside the interval, as `(first, last)`.
    pub fn integer_bounds(&self) -> Result<(i32, i32)> {
        let (lo, hi) = (self.lo.ceil() as i32, self.hi.floor() as i32);
        if lo > hi {
            return Err(Error::invalid(format!("interval [{}, {}] holds no integer", self.lo, self.hi)));
        }
        Ok((lo, hi))
    }
}

/// Search box of the alignment: scale, angle (degrees) and per-axis shift (pixels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchRanges {
    pub scale: Interval,
    pub angle: Interval,
    pub shift: Interval,
}

impl Default for SearchRanges {
    fn default() -> Self {
        Self {
            scale: Interval { lo: 0.9, hi: 1.1 },
            angle: Interval { lo: -3.0, hi: 3.0 },
            shift: Interval { lo: -90.0, hi: 90.0 },
        }
    }
}

impl SearchRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, iv) in [("scale", self.scale), ("angle", self.angle), ("shift", self.shift)] {
            Interval::new(iv.lo, iv.hi).map_err(|e| Error::invalid(format!("{name} range: {e}")))?;
        }
        if self.scale.lo <= 0.0 {
            return Err(Error::invalid("scale range must be positive"));
        }
        self.shift.integer_bounds().map(|_| ())
    }

    /// Ranges with the shift pinned to zero: the known-shift configuration.
    pub fn with_known_shift(self) -> Self {
        Self { shift: Interval::point(0.0), ..self }
    }
}

/// Resamples `img` under `p` into an `out_size` canvas.
///
/// Each output pixel is pulled from the inverse-mapped input location with
/// bilinear interpolation; neighbors outside the input contribute zero.
pub fn warp(img: &GrayImage, p: &SimilarityParams, out_size: (usize, usize)) -> GrayImage {
    let (out_w, out_h) = out_size;
    assert!(out_w > 0 && out_h > 0, "output size must be nonzero");
    let inv = p.invert().to_matrix();
    let (in_cx, in_cy) = img.center();
    let (out_cx, out_cy) = ((out_w as f64 - 1.0) / 2.0, (out_h as f64 - 1.0) / 2.0);
    let (w, h) = (img.width() as isize, img.height() as isize);
    let src = img.data();
    let fetch = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            src[(y * w + x) as usize]
        }
    };

    let mut data = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let dy = oy as f64 - out_cy;
        for ox in 0..out_w {
            let dx = ox as f64 - out_cx;
            let sx = inv[0][0] * dx + inv[0][1] * dy + inv[0][2] + in_cx;
            let sy = inv[1][0] * dx + inv[1][1] * dy + inv[1][2] + in_cy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            if x0 < -1 || y0 < -1 || x0 >= w || y0 >= h {
                data.push(0.0);
                continue;
            }
            let mut v = fetch(x0, y0) * (1.0 - fx) * (1.0 - fy);
            if fx != 0.0 {
                v += fetch(x0 + 1, y0) * fx * (1.0 - fy);
            }
            if fy != 0.0 {
                v += fetch(x0, y0 + 1) * (1.0 - fx) * fy;
                if fx != 0.0 {
                    v += fetch(x0 + 1, y0 + 1) * fx * fy;
                }
            }
            data.push(v);
        }
    }
    GrayImage::from_vec_unchecked(out_w, out_h, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_matrix_eq(a: &[[f64; 3]; 2], b: &[[f64; 3]; 2], tol: f64) {
        for r in 0..2 {
            for c in 0..3 {
                assert!((a[r][c] - b[r][c]).abs() <= tol, "{a:?} vs {b:?}");
            }
        }
    }

    const IDENTITY: [[f64; 3]; 2] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];

    #[test]
    fn matrix_examples() {
        assert_eq!(SimilarityParams::IDENTITY.to_matrix(), IDENTITY);
        let p = SimilarityParams::new(2.0, 90.0, 3.0, -1.0).unwrap();
        assert_eq!(p.to_matrix(), [[0.0, -2.0, 3.0], [2.0, 0.0, -1.0]]);
        // Independent high-precision evaluation of 1.05*cos(2deg), 1.05*sin(2deg).
        let p = SimilarityParams::new(1.05, 2.0, 10.0, -4.0).unwrap();
        let expected = [[1.0493603683700505, -0.03664447153762602, 10.0], [0.03664447153762602, 1.0493603683700505, -4.0]];
        assert_matrix_eq(&p.to_matrix(), &expected, 1e-12);
    }

    #[test]
    fn axis_aligned_angles_are_exact() {
        for (angle, cos, sin) in [(0.0, 1.0, 0.0), (90.0, 0.0, 1.0), (180.0, -1.0, 0.0), (-90.0, 0.0, -1.0)] {
            let m = SimilarityParams::new(1.0, angle, 0.0, 0.0).unwrap().to_matrix();
            assert_eq!(m, [[cos, -sin, 0.0], [sin, cos, 0.0]]);
        }
    }

    #[test]
    fn angle_normalization() {
        assert_eq!(SimilarityParams::new(1.0, -180.0, 0.0, 0.0).unwrap().angle, 180.0);
        assert_eq!(SimilarityParams::new(1.0, 270.0, 0.0, 0.0).unwrap().angle, -90.0);
        assert!(SimilarityParams::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(SimilarityParams::new(-1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn invert_examples() {
        assert_eq!(SimilarityParams::IDENTITY.invert(), SimilarityParams::IDENTITY);
        let p = SimilarityParams::new(2.0, 0.0, 0.0, 0.0).unwrap().invert();
        assert_eq!((p.scale, p.angle, p.shift_x, p.shift_y), (0.5, 0.0, 0.0, 0.0));
    }

    proptest! {
        #[test]
        fn invert_composes_to_identity(s in 0.05f64..20.0, a in -179.9f64..180.0, cx in -500.0f64..500.0, cy in -500.0f64..500.0) {
            let p = SimilarityParams::new(s, a, cx, cy).unwrap();
            let m = compose(&p.invert().to_matrix(), &p.to_matrix());
            assert_matrix_eq(&m, &IDENTITY, 1e-10);
            let m = compose(&p.to_matrix(), &p.invert().to_matrix());
            assert_matrix_eq(&m, &IDENTITY, 1e-10);
        }

        #[test]
        fn matrix_round_trip(s in 0.1f64..10.0, a in -179.0f64..180.0, cx in -50.0f64..50.0, cy in -50.0f64..50.0) {
            let p = SimilarityParams::new(s, a, cx, cy).unwrap();
            let q = SimilarityParams::from_matrix(&p.to_matrix()).unwrap();
            prop_assert!((p.scale - q.scale).abs() < 1e-12);
            prop_assert!((p.angle - q.angle).abs() < 1e-9);
        }
    }

    fn smooth_image(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            100.0 + 40.0 * (x / 9.0).sin() * (y / 13.0).cos() + 25.0 * ((x + 2.0 * y) / 17.0).sin()
        })
    }

    #[test]
    fn identity_warp_is_exact() {
        let img = smooth_image(37, 29);
        let out = warp(&img, &SimilarityParams::IDENTITY, img.dims());
        assert_eq!(out, img);
    }

    #[test]
    fn impulse_translates() {
        let mut img = GrayImage::zeros(33, 33);
        img.set(16, 16, 1.0);
        let p = SimilarityParams::new(1.0, 0.0, 5.0, 3.0).unwrap();
        let out = warp(&img, &p, img.dims());
        assert_eq!(out.get(21, 19), 1.0);
        assert!((out.energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip_error_within_bound() {
        // Bound frozen from measurement: worst observed 0.0025 of the dynamic
        // range over this sweep; asserted at 0.02.
        let img = smooth_image(128, 128);
        let (lo, hi) = img.min_max();
        let range = hi - lo;
        for &(s, a, cx, cy) in &[(1.05, 2.0, 3.5, -2.25), (0.9, -3.0, -7.0, 4.0), (1.1, 3.0, 10.0, 10.0), (0.95, 45.0, 0.0, 0.0)] {
            let p = SimilarityParams::new(s, a, cx, cy).unwrap();
            let back = warp(&warp(&img, &p, img.dims()), &p.invert(), img.dims());
            let mut worst = 0.0f64;
            for y in 32..96 {
                for x in 32..96 {
                    worst = worst.max((back.get(x, y) - img.get(x, y)).abs());
                }
            }
            assert!(worst <= 0.02 * range, "params {p:?}: error {worst} vs range {range}");
        }
    }

    #[test]
    fn rotation_preserves_disk_energy() {
        let img = GrayImage::from_fn(101, 101, |x, y| {
            let r = ((x as f64 - 50.0).powi(2) + (y as f64 - 50.0).powi(2)).sqrt();
            if r < 30.0 { 1.0 } else { 0.0 }
        });
        for angle in [1.0, 17.0, 45.0, 90.0, -135.0] {
            let out = warp(&img, &SimilarityParams::new(1.0, angle, 0.0, 0.0).unwrap(), img.dims());
            let ratio = out.energy() / img.energy();
            assert!((ratio - 1.0).abs() < 0.05, "angle {angle}: energy ratio {ratio}");
        }
    }

    #[test]
    fn ranges_defaults_and_validation() {
        let r = SearchRanges::default();
        assert_eq!((r.scale.lo, r.scale.hi, r.angle.lo, r.angle.hi, r.shift.lo, r.shift.hi), (0.9, 1.1, -3.0, 3.0, -90.0, 90.0));
        r.validate().unwrap();
        assert!(Interval::new(2.0, 1.0).is_err());
        assert_eq!(r.shift.integer_bounds().unwrap(), (-90, 90));
        assert!(r.with_known_shift().shift.is_degenerate());
    }
}

use super::*;
use crate::imgcore::{warp, SimilarityParams};
use crate::spectral::fft2_center_origin;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn textured(size: usize, seed: u64) -> GrayImage {
    crate::synth::scene(size, size, &mut rng(seed))
}

/// Fades the image to zero towards its border so that rotation and scaling
/// about the center do not move content across the frame edge.
fn tapered(img: &GrayImage) -> GrayImage {
    let (cx, cy) = img.center();
    let r0 = cx.min(cy);
    let mean = img.mean();
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let r = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt() / r0;
        let t = if r >= 0.8 { 0.0 } else if r <= 0.5 { 1.0 } else { 0.5 + 0.5 * ((r - 0.5) / 0.3 * std::f64::consts::PI).cos() };
        (img.get(x, y) - mean) * t
    })
}

/// White noise inside a soft disk of radius `size / 4`, so that shifts of up
/// to a quarter frame keep the whole support on the canvas.
fn noise_patch(size: usize, seed: u64) -> GrayImage {
    let white = crate::synth::fingerprint(size, size, 1.0, &mut rng(seed));
    let c = (size as f64 - 1.0) / 2.0;
    let r0 = size as f64 / 4.0;
    GrayImage::from_fn(size, size, |x, y| {
        let r = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt() / r0;
        let t = if r >= 1.0 { 0.0 } else if r <= 0.6 { 1.0 } else { 0.5 + 0.5 * ((r - 0.6) / 0.4 * std::f64::consts::PI).cos() };
        white.get(x, y) * t
    })
}

fn magnitudes(lp: &LogPolarSpectrum) -> Vec<f64> {
    lp.data().iter().map(|c| c.norm()).collect()
}

/// Best circular lag of `b` against `a` along one axis, summing products over the other.
fn best_lag(a: &[f64], b: &[f64], rows: usize, cols: usize, along_rows: bool) -> i64 {
    let n = if along_rows { rows } else { cols } as i64;
    let mut best = (f64::NEG_INFINITY, 0);
    for lag in -(n / 4)..=(n / 4) {
        let mut acc = 0.0;
        for r in 0..rows {
            for c in 0..cols {
                let (rr, cc) = if along_rows {
                    let rr = r as i64 - lag;
                    if rr < 0 || rr >= rows as i64 {
                        continue;
                    }
                    (rr as usize, c)
                } else {
                    (r, (c as i64 - lag).rem_euclid(cols as i64) as usize)
                };
                acc += b[r * cols + c] * a[rr * cols + cc];
            }
        }
        if acc > best.0 {
            best = (acc, lag);
        }
    }
    best.1
}

#[test]
fn grid_validation() {
    assert!(LogPolarGrid::new(1, 10, 0.0, 1.0).is_err());
    assert!(LogPolarGrid::new(10, 1, 0.0, 1.0).is_err());
    assert!(LogPolarGrid::new(10, 10, 1.0, 1.0).is_err());
    assert!(LogPolarGrid::new(10, 10, f64::NAN, 1.0).is_err());
    let g = LogPolarGrid::new(11, 4, 0.0, 1.0).unwrap();
    assert!((g.rho_step() - 0.1).abs() < 1e-15);
    assert_eq!(g.alpha_step(), 45.0);
    assert_eq!(g.alpha(3), 135.0);
}

#[test]
fn fine_grid_resolves_the_parameter_tolerances() {
    for n in [256, 1024, 4096] {
        let g = LogPolarGrid::fine(n).unwrap();
        assert!(g.resolves_scale(), "{g:?}");
        assert!(g.alpha_step() <= ANGLE_RESOLUTION);
        assert!(g.rho_max <= ((n / 2) as f64).ln() + 1e-12);
    }
    assert!(!LogPolarGrid::search(1024).unwrap().resolves_scale());
}

#[test]
fn crop_window_clamping() {
    let g = LogPolarGrid::new(100, 8, 0.0, 1.0).unwrap();
    assert_eq!(g.crop_start(20, 0).unwrap(), 0);
    assert_eq!(g.crop_start(20, 50).unwrap(), 40);
    assert_eq!(g.crop_start(20, 99).unwrap(), 80);
    assert_eq!(g.crop_start(100, 37).unwrap(), 0);
    assert!(matches!(g.crop_start(101, 0), Err(Error::BadCrop { delta_rho: 101, n_rho: 100 })));
    assert!(matches!(g.crop_start(0, 0), Err(Error::BadCrop { .. })));
    assert!(g.crop_start(10, 100).is_err());
    assert_eq!(g.rows_for_fraction(DEFAULT_DELTA_RHO_FRACTION).unwrap(), 28);
    assert!(g.rows_for_fraction(0.0).is_err());
}

#[test]
fn isotropic_spectrum_is_constant_along_alpha() {
    let img = GrayImage::from_fn(129, 129, |x, y| {
        let r2 = (x as f64 - 64.0).powi(2) + (y as f64 - 64.0).powi(2);
        (-r2 / (2.0 * 3.0 * 3.0)).exp()
    });
    let grid = LogPolarGrid::new(40, 90, 1.0f64.ln(), 20.0f64.ln()).unwrap();
    let lp = classic_fm(&img, 256, &grid).unwrap();
    let mags = magnitudes(&lp);
    for row in mags.chunks(lp.cols()) {
        let (lo, hi) = row.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        assert!(hi - lo <= 0.01 * hi, "row spread {lo}..{hi}");
    }
}

#[test]
fn rotation_shifts_the_alpha_axis() {
    let img = tapered(&textured(256, 1));
    let rotated = warp(&img, &SimilarityParams::new(1.0, 10.0, 0.0, 0.0).unwrap(), img.dims());
    let grid = LogPolarGrid::new(64, 360, 4.0f64.ln(), 100.0f64.ln()).unwrap();
    let a = magnitudes(&classic_fm(&img, 512, &grid).unwrap());
    let b = magnitudes(&classic_fm(&rotated, 512, &grid).unwrap());
    let expected = 10.0 / grid.alpha_step();
    let lag = best_lag(&a, &b, grid.n_rho, grid.n_alpha, false);
    assert!((lag as f64 - expected).abs() <= 1.0, "lag {lag}, expected {expected}");
}

#[test]
fn scaling_shifts_the_rho_axis() {
    let img = noise_patch(256, 2);
    let scaled = warp(&img, &SimilarityParams::new(1.05, 0.0, 0.0, 0.0).unwrap(), img.dims());
    let grid = LogPolarGrid::new(200, 90, 4.0f64.ln(), 100.0f64.ln()).unwrap();
    let a = magnitudes(&classic_fm(&img, 512, &grid).unwrap());
    let b = magnitudes(&classic_fm(&scaled, 512, &grid).unwrap());
    // Magnifying by s compresses the spectrum: rho moves down by ln s.
    let expected = -(1.05f64).ln() / grid.rho_step();
    let lag = best_lag(&a, &b, grid.n_rho, grid.n_alpha, true);
    assert!((lag as f64 - expected).abs() <= 1.0, "lag {lag}, expected {expected}");
}

fn classic_lag(a: &GrayImage, b: &GrayImage, grid: &LogPolarGrid) -> (f64, f64) {
    let fa = classic_fm(a, 512, grid).unwrap();
    let fb = classic_fm(b, 512, grid).unwrap();
    estimate_scale_rotation(&fa, &fb).unwrap().lag
}

#[test]
fn classic_path_turns_similarity_into_translation() {
    let grid = LogPolarGrid::new(256, 256, 4.0f64.ln(), 128.0f64.ln()).unwrap();
    let base = noise_patch(256, 3);
    let (lr, la) = classic_lag(&base, &base, &grid);
    assert_eq!((lr.round(), la.round()), (0.0, 0.0));
    let moved = warp(&base, &SimilarityParams::new(1.0, 0.0, 17.0, -9.0).unwrap(), base.dims());
    let (lr, la) = classic_lag(&moved, &base, &grid);
    assert!(lr.abs() <= 1.0 && la.abs() <= 1.0, "{lr}, {la}");
    for (s, a, sx, sy) in [(1.07, 2.5, 0.0, 0.0), (0.93, -2.0, 30.0, 12.0)] {
        let warped = warp(&base, &SimilarityParams::new(s, a, sx, sy).unwrap(), base.dims());
        let (lr, la) = classic_lag(&warped, &base, &grid);
        let (er, ea) = (-f64::ln(s) / grid.rho_step(), a / grid.alpha_step());
        assert!((lr - er).abs() <= 1.0 && (la - ea).abs() <= 1.0, "({lr}, {la}) vs ({er}, {ea})");
    }
}

#[test]
fn mfm_full_crop_equals_log_polar_map() {
    let img = textured(128, 4);
    let grid = LogPolarGrid::new(50, 64, 2.0f64.ln(), 64.0f64.ln()).unwrap();
    let full = log_polar_map(&fft2_center_origin(&img, 256).unwrap(), &grid);
    let cropped = mfm(&img, 256, &grid, 50, 17).unwrap();
    assert_eq!(cropped, full);
    let part = mfm(&img, 256, &grid, 20, 0).unwrap();
    assert_eq!((part.rows(), part.crop_offset()), (20, 0));
    assert_eq!(part.data(), &full.data()[..20 * 64]);
    assert_eq!(full.crop(20, 0).unwrap(), part);
    assert!(matches!(mfm(&img, 256, &grid, 51, 0), Err(Error::BadCrop { .. })));
}

#[test]
fn mfm_crop_has_requested_rows() {
    let img = textured(128, 5);
    let grid = LogPolarGrid::fine(256).unwrap();
    let lp = mfm(&img, 256, &grid, 200, grid.n_rho / 2).unwrap();
    assert_eq!(lp.rows(), 200);
    assert_eq!(lp.data().len(), 200 * grid.n_alpha);
    assert!(lp.data().iter().all(|c| c.re.is_finite() && c.im.is_finite()));
}

#[test]
fn resolved_rows_bound_the_angular_spacing() {
    let search = LogPolarGrid::search(1024).unwrap();
    let step = search.alpha_step().to_radians();
    let n = search.resolved_rows();
    assert!(search.rho(n - 1).exp() * step <= 1.0 && search.rho(n).exp() * step > 1.0);
    assert_eq!(n, 9);
    let fine = LogPolarGrid::fine(1024).unwrap();
    assert_eq!(fine.resolved_rows(), fine.n_rho);
    assert_eq!(LogPolarGrid::new(10, 4, 5.0, 6.0).unwrap().resolved_rows(), 1);

    // Energy outside the resolved rows does not move the crop center.
    let mut lp = LogPolarSpectrum { data: vec![Complex64::new(1.0, 0.0); search.n_rho * 128], rows: search.n_rho, grid: search, crop_offset: 0, per_bin: 0.25 };
    lp.data[40 * 128] = Complex64::new(9.0, 0.0);
    lp.data[5 * 128] = Complex64::new(3.0, 0.0);
    assert_eq!(crop_center_from_fingerprint(&lp), 40);
    assert_eq!(resolved_crop_center(&lp), 5);
}

#[test]
fn crop_center_rules() {
    let grid = LogPolarGrid::new(30, 16, 0.0, 1.0).unwrap();
    let mut lp = LogPolarSpectrum { data: vec![Complex64::new(1.0, 0.0); 30 * 16], rows: 30, grid, crop_offset: 0, per_bin: 0.25 };
    assert_eq!(crop_center_from_fingerprint(&lp), 0);
    lp.data[12 * 16 + 3] = Complex64::new(0.0, 5.0);
    assert_eq!(crop_center_from_fingerprint(&lp), 12);

    let k = crate::synth::fingerprint(128, 128, 0.01, &mut rng(6));
    let grid = LogPolarGrid::new(80, 64, 2.0f64.ln(), 64.0f64.ln()).unwrap();
    let lp = log_polar_map(&fft2_center_origin(&k, 256).unwrap(), &grid);
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..lp.rows() {
        let mut e = 0.0;
        for j in 0..lp.cols() {
            e += lp.at(i, j).norm_sqr();
        }
        if e > best.1 {
            best = (i, e);
        }
    }
    assert_eq!(crop_center_from_fingerprint(&lp), best.0);
}

#[test]
fn shifted_stencil_matches_translated_spectrum() {
    let img = textured(96, 7);
    let spec = fft2_center_origin(&img, 128).unwrap();
    let grid = LogPolarGrid::new(40, 48, 1.0f64.ln(), 64.0f64.ln()).unwrap();
    let stencil = ShiftedLogPolar::new(&spec, &grid, 5, 30);
    for shift in [(0, 0), (3, -2), (-17, 40), (63, -64)] {
        let fast = stencil.sample(shift);
        let slow = log_polar_rows(&spec.translated(shift.0 as f64, shift.1 as f64), &grid, 5, 30);
        let scale = slow.data().iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).norm() <= 1e-9 * scale, "{shift:?}: {a} vs {b}");
        }
        assert_eq!(fast.crop_offset(), 5);
    }
}

struct Pair {
    k: GrayImage,
    grid: LogPolarGrid,
    delta: usize,
    center: usize,
}

impl Pair {
    fn new(seed: u64) -> Self {
        let k = crate::synth::fingerprint(256, 256, 1.0, &mut rng(seed));
        let grid = LogPolarGrid::fine(512).unwrap();
        let full = log_polar_map(&fft2_center_origin(&k, 512).unwrap(), &grid);
        let center = crop_center_from_fingerprint(&full);
        let delta = grid.rows_for_fraction(DEFAULT_DELTA_RHO_FRACTION).unwrap();
        Self { k, grid, delta, center }
    }

    fn lp(&self, img: &GrayImage) -> LogPolarSpectrum {
        mfm(img, 512, &self.grid, self.delta, self.center).unwrap()
    }
}

#[test]
fn identical_inputs_give_identity() {
    let p = Pair::new(8);
    let lp = p.lp(&p.k);
    let est = estimate_scale_rotation(&lp, &lp).unwrap();
    assert_eq!(est.scale, 1.0);
    assert!(est.angle.abs() < 1e-12);
    assert!((est.peak - 1.0).abs() < 1e-9);
}

#[test]
fn planted_scale_and_rotation_are_recovered() {
    let p = Pair::new(9);
    let w = warp(&p.k, &SimilarityParams::new(1.05, 2.0, 0.0, 0.0).unwrap(), p.k.dims());
    let est = estimate_scale_rotation(&p.lp(&w), &p.lp(&p.k)).unwrap();
    assert!((est.scale - 1.05).abs() <= 0.002, "{est:?}");
    assert!((est.angle - 2.0).abs() <= 0.05, "{est:?}");
    let window = LagWindow::from_ranges(&p.grid, p.delta, Interval { lo: 0.9, hi: 1.1 }, Interval { lo: -3.0, hi: 3.0 });
    let windowed = estimate_scale_rotation_within(&p.lp(&w), &p.lp(&p.k), &window).unwrap();
    assert_eq!(windowed, est);
}

#[test]
fn uncompensated_shift_lowers_the_peak() {
    let p = Pair::new(10);
    let params = SimilarityParams::new(1.05, 2.0, 0.0, 0.0).unwrap();
    let aligned = estimate_scale_rotation(&p.lp(&warp(&p.k, &params, p.k.dims())), &p.lp(&p.k)).unwrap();
    let shifted = SimilarityParams { shift_x: 40.0, ..params };
    let off = estimate_scale_rotation(&p.lp(&warp(&p.k, &shifted, p.k.dims())), &p.lp(&p.k)).unwrap();
    assert!(off.peak < aligned.peak, "{} vs {}", off.peak, aligned.peak);
}

#[test]
fn half_turn_ambiguity_folds_onto_one_shift() {
    let img = tapered(&textured(128, 11));
    let grid = LogPolarGrid::new(64, 180, 2.0f64.ln(), 60.0f64.ln()).unwrap();
    let a = warp(&img, &SimilarityParams::new(1.0, 2.0, 0.0, 0.0).unwrap(), img.dims());
    let b = warp(&img, &SimilarityParams::new(1.0, 2.0 - 180.0, 0.0, 0.0).unwrap(), img.dims());
    let la = classic_lag(&a, &img, &grid);
    let lb = classic_lag(&b, &img, &grid);
    assert_eq!((la.0.round(), la.1.round()), (lb.0.round(), lb.1.round()));
    let est = estimate_scale_rotation(&classic_fm(&b, 512, &grid).unwrap(), &classic_fm(&img, 512, &grid).unwrap()).unwrap();
    assert!(est.angle > -90.0 && est.angle <= 90.0);
}

#[test]
fn lag_window_from_ranges() {
    let grid = LogPolarGrid::new(100, 180, 0.0, 9.9).unwrap();
    let w = LagWindow::from_ranges(&grid, 100, Interval { lo: 0.9, hi: 1.1 }, Interval { lo: -3.0, hi: 3.0 });
    // rho step 0.1: -ln 1.1 / 0.1 = -0.95, -ln 0.9 / 0.1 = 1.05.
    assert_eq!(w.rho, (-1, 2));
    assert_eq!(w.alpha, (-3, 3));
    let wide = LagWindow::from_ranges(&grid, 4, Interval { lo: 0.01, hi: 100.0 }, Interval { lo: -90.0, hi: 90.0 });
    assert_eq!(wide, LagWindow::full(4, 180));
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::imgcore::{Interval, SearchRanges};
use crate::mellin::DEFAULT_DELTA_RHO_FRACTION;
use crate::noise::{extract, NoiseConfig};
use crate::synth;

const SIZE: usize = 256;

struct Pair {
    k: GrayImage,
    residual: GrayImage,
    frame: GrayImage,
}

/// A frame carrying `k`, warped by `(s, a)` after shifting by `c`, and its
/// residual. Clean pairs are flat-field exposures; others carry a scene.
fn pair_with(k: GrayImage, seed: u64, clean: bool, s: f64, a: f64, c: (i32, i32)) -> Pair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = if clean { synth::flat_field(SIZE, SIZE, 128.0) } else { synth::scene(SIZE, SIZE, &mut rng) };
    let shot = synth::render(&scene, &k, 1.0, &mut rng);
    let params = transform_for(s, a, c).unwrap();
    let frame = warp(&shot, &params, (SIZE, SIZE));
    let residual = extract(&frame, &NoiseConfig::default()).unwrap().raster;
    Pair { k, residual, frame: warp(&scene, &params, (SIZE, SIZE)) }
}

fn planted(seed: u64) -> GrayImage {
    synth::fingerprint(SIZE, SIZE, 0.01, &mut ChaCha8Rng::seed_from_u64(seed ^ 0xfeed))
}

fn pair(seed: u64, s: f64, a: f64, c: (i32, i32)) -> Pair {
    pair_with(planted(seed), seed, true, s, a, c)
}

fn scene_pair(seed: u64, s: f64, a: f64, c: (i32, i32)) -> Pair {
    pair_with(planted(seed), seed, false, s, a, c)
}

fn reference(k: &GrayImage) -> ReferenceContext {
    ReferenceContext::new(k, DEFAULT_DELTA_RHO_FRACTION).unwrap()
}

fn ranges() -> SearchRanges {
    SearchRanges::default()
}

#[test]
fn fft_size_leaves_room_for_linear_correlation() {
    assert_eq!(fft_size_for(256, 256), 512);
    assert_eq!(fft_size_for(300, 200), 1024);
    assert_eq!(fft_size_for(512, 512), 1024);
}

#[test]
fn transform_for_rotates_the_shift() {
    let p = transform_for(2.0, 90.0, (3, 1)).unwrap();
    assert_eq!((p.scale, p.angle), (2.0, 90.0));
    assert!((p.shift_x + 2.0).abs() < 1e-12 && (p.shift_y - 6.0).abs() < 1e-12, "{p:?}");
}

#[test]
fn ga_config_validation() {
    assert!(GaConfig::default().validate().is_ok());
    for bad in [
        GaConfig { population: 3, ..GaConfig::default() },
        GaConfig { population: 51, ..GaConfig::default() },
        GaConfig { elite_count: 50, ..GaConfig::default() },
        GaConfig { mutation_rate: 1.5, ..GaConfig::default() },
        GaConfig { crossover_rate: -0.1, ..GaConfig::default() },
        GaConfig { tournament_size: 0, ..GaConfig::default() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter(_))), "{bad:?}");
    }
    assert_eq!(GaConfig::default().budget(), 50 * 51);
}

#[test]
fn context_rejects_bad_inputs() {
    let p = pair(1, 1.0, 0.0, (0, 0));
    let r = reference(&p.k);
    let small = GrayImage::filled(128, 128, 1.0);
    assert!(matches!(FitnessContext::new(&r, &small, &ranges()), Err(Error::DimensionMismatch { .. })));
    let flat = GrayImage::zeros(SIZE, SIZE);
    assert!(matches!(FitnessContext::new(&r, &flat, &ranges()), Err(Error::DegenerateInput(_))));
    assert!(matches!(ReferenceContext::new(&flat, DEFAULT_DELTA_RHO_FRACTION), Err(Error::DegenerateInput(_))));
}

#[test]
fn fitness_peaks_at_the_planted_shift() {
    for (seed, s, a, c) in [(2, 1.04, 1.5, (23, -31)), (3, 0.95, -2.0, (-40, 12))] {
        let p = pair(seed, s, a, c);
        let r = reference(&p.k);
        let ctx = FitnessContext::new(&r, &p.residual, &ranges()).unwrap();
        let at = fitness(c, &ctx).unwrap();
        let grid = r.search_band().0;
        assert!((at.scale / s).ln().abs() <= grid.rho_step() && (at.angle - a).abs() <= grid.alpha_step(), "{at:?}");
        for dx in [-6, 6, 12] {
            for dy in [-6, 6, 12] {
                let probe = fitness((c.0 + dx, c.1 + dy), &ctx).unwrap();
                assert!(at.value > probe.value, "c={c:?} d=({dx},{dy}): {} vs {}", at.value, probe.value);
            }
        }
    }
}

#[test]
fn boundary_shifts_evaluate() {
    let p = pair(4, 1.0, 0.0, (0, 0));
    let r = reference(&p.k);
    let ctx = FitnessContext::new(&r, &p.residual, &ranges()).unwrap();
    for c in [(-90, -90), (90, 90), (-90, 90)] {
        assert!(fitness(c, &ctx).unwrap().value.is_finite());
    }
    assert!(matches!(fitness((91, 0), &ctx), Err(Error::InvalidParameter(_))));
}

// The objective is a maximum over the scale/angle lag window, so its null
// spread over 20 draws is wide (max/min near 2); it must show no structure
// and stay far below a matched peak.
#[test]
fn unrelated_fingerprint_gives_a_flat_objective() {
    let p = pair(5, 1.02, 1.0, (10, 20));
    let matched = FitnessContext::new(&reference(&p.k), &p.residual, &ranges()).unwrap().fitness((10, 20)).unwrap().value;
    let other = planted(99);
    let r = reference(&other);
    let ctx = FitnessContext::new(&r, &p.residual, &ranges()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let values: Vec<f64> = (0..20)
        .map(|_| fitness((rng.gen_range(-90..=90), rng.gen_range(-90..=90)), &ctx).unwrap().value)
        .collect();
    let (lo, hi) = values.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    assert!(hi / lo < 3.0, "max/min = {}", hi / lo);
    assert!(matched > 2.0 * hi, "matched {matched} vs null max {hi}");
}

#[test]
fn ga_recovers_a_planted_shift() {
    let c = (37, -12);
    let p = pair(7, 1.03, -1.2, c);
    let r = reference(&p.k);
    let ctx = FitnessContext::new(&r, &p.residual, &ranges()).unwrap();
    let hits = (0..20)
        .filter(|&seed| {
            let res = ga_search(&ctx, &GaConfig { rng_seed: seed, ..GaConfig::default() }).unwrap();
            (res.shift.0 - c.0).abs() <= 1 && (res.shift.1 - c.1).abs() <= 1
        })
        .count();
    assert!(hits >= 18, "{hits}/20 runs within 1 px");
}

#[test]
fn ga_respects_budget_and_keeps_the_incumbent() {
    let p = pair(8, 0.97, 2.0, (-15, 40));
    let r = reference(&p.k);
    let ctx = FitnessContext::new(&r, &p.residual, &ranges()).unwrap();
    for cfg in [
        GaConfig { population: 4, max_iterations: 3, ..GaConfig::default() },
        GaConfig { population: 10, max_iterations: 6, elite_count: 0, rng_seed: 3, ..GaConfig::default() },
        GaConfig { population: 20, max_iterations: 10, mutation_rate: 1.0, rng_seed: 5, ..GaConfig::default() },
    ] {
        let out = ga::run(&ctx, (-90, 90), &cfg).unwrap();
        assert!(out.evaluations <= cfg.budget(), "{} > {}", out.evaluations, cfg.budget());
        assert!(out.fitness.value >= out.initial_best);
        assert_eq!(out.fitness, ctx.fitness(out.best).unwrap());
    }
}

#[test]
fn collapsed_shift_range_is_a_single_evaluation() {
    let p = pair(9, 1.05, 0.8, (0, 0));
    let r = reference(&p.k);
    let known = SearchRanges { shift: Interval::point(0.0), ..ranges() };
    let ctx = FitnessContext::new(&r, &p.residual, &known).unwrap();
    let out = ga::run(&ctx, (0, 0), &GaConfig::default()).unwrap();
    assert_eq!(out.evaluations, 1);
    assert_eq!(out.fitness, fitness((0, 0), &ctx).unwrap());

    // The fast path skips the optimizer and reports the direct estimate.
    let res = align(&ctx, &GaConfig::default()).unwrap();
    let direct = ctx.estimate_at((0, 0)).unwrap();
    assert_eq!(res.evaluations, 0);
    assert_eq!((res.params.scale, res.params.angle), (direct.scale, direct.angle));
    assert_eq!((res.params.shift_x, res.params.shift_y, res.shift), (0.0, 0.0, (0, 0)));
    assert!((res.params.scale - 1.05).abs() <= 0.002 && (res.params.angle - 0.8).abs() <= 0.05, "{res:?}");
}

#[test]
fn search_is_deterministic_across_thread_counts() {
    let p = pair(10, 1.0, 0.5, (5, -5));
    let r = reference(&p.k);
    let ctx = FitnessContext::new(&r, &p.residual, &ranges()).unwrap();
    let cfg = GaConfig { population: 20, max_iterations: 10, rng_seed: 42, ..GaConfig::default() };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let res = pool.install(|| ga_search(&ctx, &cfg)).unwrap();
        AlignmentResult { elapsed: 0.0, ..res }
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(4));
}

#[test]
fn estimates_are_clamped_into_the_ranges() {
    let c = (12, 8);
    let p = scene_pair(11, 1.08, 2.5, c);
    let r = reference(&p.k);
    let tight = SearchRanges {
        scale: Interval::new(0.98, 1.02).unwrap(),
        angle: Interval::new(-1.0, 1.0).unwrap(),
        shift: Interval::new(-20.0, 20.0).unwrap(),
    };
    let ctx = FitnessContext::new(&r, &p.residual, &tight).unwrap();
    let res = align(&ctx, &GaConfig { population: 10, max_iterations: 5, ..GaConfig::default() }).unwrap();
    assert!(tight.scale.contains(res.params.scale) && tight.angle.contains(res.params.angle), "{res:?}");
    assert!((-20..=20).contains(&res.shift.0) && (-20..=20).contains(&res.shift.1));
}

#[test]
fn identity_warp_aligns_to_identity() {
    let p = pair(12, 1.0, 0.0, (0, 0));
    let r = reference(&p.k);
    let ctx = FitnessContext::new(&r, &p.residual, &ranges()).unwrap();
    let res = align(&ctx, &GaConfig::default()).unwrap();
    assert_eq!(res.shift, (0, 0));
    assert!((res.params.scale - 1.0).abs() <= 0.002 && res.params.angle.abs() <= 0.05, "{res:?}");
    assert!(!res.low_confidence);
}

#[test]
fn compensation_separates_right_and_wrong_parameters() {
    let c = (-25, 30);
    let p = scene_pair(13, 0.96, -2.2, c);
    let r = reference(&p.k);
    let ctx = FitnessContext::new(&r, &p.residual, &ranges()).unwrap();
    let res = align(&ctx, &GaConfig::default()).unwrap();
    let right = compensate_and_test(&p.residual, &p.k, &res.params, Some(&p.frame)).unwrap();
    assert!(right.pce > 60.0, "{right:?}");

    let off = transform_for(res.params.scale, res.params.angle + 2.0, (c.0 + 20, c.1)).unwrap();
    let wrong = compensate_and_test(&p.residual, &p.k, &off, Some(&p.frame)).unwrap();
    assert!(wrong.pce < 60.0, "{wrong:?}");

    let identity = scene_pair(14, 1.0, 0.0, (0, 0));
    let direct = compensate_and_test(&identity.residual, &identity.k, &SimilarityParams::IDENTITY, Some(&identity.frame)).unwrap();
    assert!(direct.pce > 60.0, "{direct:?}");

    let stranger = planted(77);
    let foreign = compensate_and_test(&p.residual, &stranger, &res.params, Some(&p.frame)).unwrap();
    assert!(foreign.pce < 60.0, "{foreign:?}");
}

fn result(pce: f64) -> PceResult {
    PceResult { pce, peak_pos: (0, 0), peak_value: 0.0, plane_energy: 1.0 }
}

#[test]
fn fusion_picks_the_first_maximum() {
    assert_eq!(fuse_frames(&[result(12.0), result(340.0), result(7.0)]).unwrap(), (340.0, 1));
    assert_eq!(fuse_frames(&[result(5.0)]).unwrap(), (5.0, 0));
    assert_eq!(fuse_frames(&[result(9.0), result(9.0)]).unwrap(), (9.0, 0));
    assert!(matches!(fuse_frames(&[]), Err(Error::EmptyList)));
}

#[test]
fn fusion_over_mixed_frames_returns_the_best_match() {
    let k = synth::fingerprint(128, 128, 0.02, &mut ChaCha8Rng::seed_from_u64(20));
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let results: Vec<PceResult> = (0..10)
        .map(|i| {
            let scene = synth::scene(128, 128, &mut rng);
            let own = [2, 5, 8].contains(&i);
            let prnu = if own { k.clone() } else { synth::fingerprint(128, 128, 0.02, &mut rng) };
            let frame = synth::render(&scene, &prnu, 1.0, &mut rng);
            let w = extract(&frame, &NoiseConfig::default()).unwrap();
            compensate_and_test(&w, &k, &SimilarityParams::IDENTITY, Some(&scene)).unwrap()
        })
        .collect();
    let best_own = [2, 5, 8].iter().map(|&i| results[i].pce).fold(f64::NEG_INFINITY, f64::max);
    let (fused, index) = fuse_frames(&results).unwrap();
    assert_eq!(fused, best_own);
    assert!([2, 5, 8].contains(&index));
}

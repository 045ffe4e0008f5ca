//! Seeded synthetic benchmark: planted fingerprints, frames warped by random
//! similarities, and both alignment paths scored per trial.
//!
//! The per-trial CSV holds only quantities that are a pure function of the
//! configuration, so equal configurations give byte-identical tables on any
//! thread count. Wall-clock timings go to the JSON summary.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{warp, GrayImage, SearchRanges};
use crate::noise::{extract, NoiseConfig, MIN_DIMENSION};
use crate::report::{delta_rho_fraction, DEFAULT_DELTA_RHO, DEFAULT_PCE_THRESHOLD, REFERENCE_RHO_ROWS};
use crate::search::{align, align_known, compensate_and_test, transform_for, FitnessContext, GaConfig, ReferenceContext};
use crate::synth;

/// Scale tolerance of a correct known-shift estimate.
pub const SCALE_TOLERANCE: f64 = 0.002;
/// Angle tolerance (degrees) of a correct known-shift estimate.
pub const ANGLE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMode {
    /// Random scale, rotation and shift; both alignment paths run.
    Full,
    /// Scale and rotation only; just the known-shift path runs.
    ScaleRotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub trials: usize,
    pub image_size: usize,
    pub ranges: SearchRanges,
    /// Crops in rows of the reference log-polar axis (see [`REFERENCE_RHO_ROWS`]).
    pub delta_rho: Vec<f64>,
    pub pce_threshold: f64,
    /// Standard deviations of the additive sensor noise; each is a separate set of trials.
    pub noise_levels: Vec<f64>,
    /// Standard deviation of the planted PRNU.
    pub prnu_sigma: f64,
    pub rng_seed: u64,
    pub mode: BenchMode,
    /// Also test every frame against an independent fingerprint.
    pub impostors: bool,
    pub ga: GaConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            trials: 20,
            image_size: 512,
            ranges: SearchRanges::default(),
            delta_rho: vec![DEFAULT_DELTA_RHO],
            pce_threshold: DEFAULT_PCE_THRESHOLD,
            noise_levels: vec![2.0],
            prnu_sigma: 0.01,
            rng_seed: 0,
            mode: BenchMode::Full,
            impostors: false,
            ga: GaConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if !(self.pce_threshold > 0.0 && self.pce_threshold.is_finite()) {
            return Err(Error::invalid(format!("PCE threshold must be positive, got {}", self.pce_threshold)));
        }
        if self.image_size < MIN_DIMENSION {
            return Err(Error::invalid(format!("image size must be at least {MIN_DIMENSION}, got {}", self.image_size)));
        }
        if self.delta_rho.is_empty() || self.delta_rho.iter().any(|&d| !(d > 0.0 && d <= REFERENCE_RHO_ROWS)) {
            return Err(Error::invalid(format!("delta_rho values must lie in (0, {REFERENCE_RHO_ROWS}]")));
        }
        if self.noise_levels.is_empty() || self.noise_levels.iter().any(|&n| !(n >= 0.0 && n.is_finite())) {
            return Err(Error::invalid("noise levels must be a nonempty list of nonnegative values"));
        }
        if !(self.prnu_sigma > 0.0 && self.prnu_sigma.is_finite()) {
            return Err(Error::invalid("PRNU sigma must be positive"));
        }
        self.ranges.validate()?;
        self.ga.validate()
    }

    /// Trials over all noise levels.
    pub fn total_trials(&self) -> usize {
        self.trials * self.noise_levels.len()
    }
}

/// One synthetic trial: a device, a warped frame and its residual.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub index: usize,
    pub noise_sigma: f64,
    pub fingerprint: GrayImage,
    /// Independent fingerprint for the false-positive check.
    pub impostor: GrayImage,
    /// Observed (warped) frame.
    pub frame: GrayImage,
    pub residual: GrayImage,
    pub scale: f64,
    pub angle: f64,
    pub shift: (i32, i32),
    /// Seconds spent extracting the residual.
    pub extract_time: f64,
}

/// Stream of trial `index`; independent of how trials are scheduled.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Synthesizes trial `index` of `cfg`. Trials are numbered across noise
/// levels: level `index / cfg.trials`.
pub fn scenario(cfg: &BenchConfig, index: usize) -> Result<Scenario> {
    let noise_sigma = cfg.noise_levels[index / cfg.trials];
    let n = cfg.image_size;
    let mut rng = trial_rng(cfg.rng_seed, index);
    let fingerprint = synth::fingerprint(n, n, cfg.prnu_sigma, &mut rng);
    let impostor = synth::fingerprint(n, n, cfg.prnu_sigma, &mut rng);
    let scene = synth::scene(n, n, &mut rng);
    let shot = synth::render(&scene, &fingerprint, noise_sigma, &mut rng);
    let (r, scale_range, angle_range) = (cfg.ranges, cfg.ranges.scale, cfg.ranges.angle);
    let scale = rng.gen_range(scale_range.lo..=scale_range.hi);
    let angle = rng.gen_range(angle_range.lo..=angle_range.hi);
    let shift = match cfg.mode {
        BenchMode::ScaleRotation => (0, 0),
        BenchMode::Full => {
            let (lo, hi) = r.shift.integer_bounds()?;
            (rng.gen_range(lo..=hi), rng.gen_range(lo..=hi))
        }
    };
    let frame = warp(&shot, &transform_for(scale, angle, shift)?, (n, n));
    let started = Instant::now();
    let residual = extract(&frame, &NoiseConfig::default())?.raster;
    let extract_time = started.elapsed().as_secs_f64();
    Ok(Scenario { index, noise_sigma, fingerprint, impostor, frame, residual, scale, angle, shift, extract_time })
}

/// Outcome of one alignment path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub scale: f64,
    pub angle: f64,
    pub shift: (i32, i32),
    pub pce: f64,
    pub evaluations: usize,
    /// Seconds spent in the alignment itself.
    pub elapsed: f64,
}

impl PathOutcome {
    pub fn scale_error(&self, truth: &Scenario) -> f64 {
        self.scale - truth.scale
    }

    pub fn angle_error(&self, truth: &Scenario) -> f64 {
        self.angle - truth.angle
    }

    pub fn shift_error(&self, truth: &Scenario) -> (i32, i32) {
        (self.shift.0 - truth.shift.0, self.shift.1 - truth.shift.1)
    }

    /// Scale and angle within [`SCALE_TOLERANCE`] and [`ANGLE_TOLERANCE`].
    pub fn parameters_recovered(&self, truth: &Scenario) -> bool {
        self.scale_error(truth).abs() <= SCALE_TOLERANCE && self.angle_error(truth).abs() <= ANGLE_TOLERANCE
    }

    /// Shift within one pixel per axis.
    pub fn shift_recovered(&self, truth: &Scenario) -> bool {
        let (dx, dy) = self.shift_error(truth);
        dx.abs() <= 1 && dy.abs() <= 1
    }
}

/// Both paths of one trial at one crop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub noise_sigma: f64,
    pub delta_rho: f64,
    pub true_scale: f64,
    pub true_angle: f64,
    pub true_shift: (i32, i32),
    pub known: PathOutcome,
    pub full: Option<PathOutcome>,
    pub impostor: Option<PathOutcome>,
    /// Seconds spent on the residual's extraction and spectral transforms.
    pub transform_time: f64,
}

fn run_path(ctx: &FitnessContext<'_>, sc: &Scenario, k: &GrayImage, known: bool, ga: &GaConfig) -> Result<PathOutcome> {
    let res = if known { align_known(ctx, sc.shift, ga)? } else { align(ctx, ga)? };
    let pce = compensate_and_test(&sc.residual, k, &res.params, Some(&sc.frame))?;
    Ok(PathOutcome {
        scale: res.params.scale,
        angle: res.params.angle,
        shift: res.shift,
        pce: pce.pce,
        evaluations: res.evaluations,
        elapsed: res.elapsed,
    })
}

/// Runs every configured path of `sc` at crop `delta_rho`.
pub fn evaluate(cfg: &BenchConfig, sc: &Scenario, delta_rho: f64) -> Result<TrialOutcome> {
    let fraction = delta_rho_fraction(delta_rho);
    let reference = ReferenceContext::new(&sc.fingerprint, fraction)?;
    let started = Instant::now();
    let ctx = FitnessContext::new(&reference, &sc.residual, &cfg.ranges)?;
    let transform_time = sc.extract_time + started.elapsed().as_secs_f64();
    let ga = GaConfig { rng_seed: cfg.ga.rng_seed.wrapping_add(sc.index as u64), ..cfg.ga.clone() };
    let known = run_path(&ctx, sc, &sc.fingerprint, true, &ga)?;
    let (full, impostor) = match cfg.mode {
        BenchMode::ScaleRotation => (None, None),
        BenchMode::Full => {
            let full = run_path(&ctx, sc, &sc.fingerprint, false, &ga)?;
            let impostor = if cfg.impostors {
                let other = ReferenceContext::new(&sc.impostor, fraction)?;
                let ctx = FitnessContext::new(&other, &sc.residual, &cfg.ranges)?;
                Some(run_path(&ctx, sc, &sc.impostor, false, &ga)?)
            } else {
                None
            };
            (Some(full), impostor)
        }
    };
    Ok(TrialOutcome {
        trial: sc.index,
        noise_sigma: sc.noise_sigma,
        delta_rho,
        true_scale: sc.scale,
        true_angle: sc.angle,
        true_shift: sc.shift,
        known,
        full,
        impostor,
        transform_time,
    })
}

/// All trials, ordered by trial and then by crop.
pub fn run(cfg: &BenchConfig) -> Result<Vec<TrialOutcome>> {
    cfg.validate()?;
    let per_trial: Vec<Vec<TrialOutcome>> = (0..cfg.total_trials())
        .into_par_iter()
        .map(|i| {
            let sc = scenario(cfg, i)?;
            cfg.delta_rho.iter().map(|&d| evaluate(cfg, &sc, d)).collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// Column names of the per-trial table in `mode`.
pub fn csv_header(mode: BenchMode, impostors: bool) -> Vec<&'static str> {
    let mut h = vec![
        "trial",
        "noise_sigma",
        "delta_rho",
        "true_scale",
        "true_angle",
        "known_scale_error",
        "known_angle_error",
        "known_pce",
        "known_matched",
    ];
    if mode == BenchMode::Full {
        h.extend([
            "true_cx",
            "true_cy",
            "full_scale_error",
            "full_angle_error",
            "full_cx_error",
            "full_cy_error",
            "full_pce",
            "full_matched",
            "full_evaluations",
        ]);
        if impostors {
            h.extend(["impostor_pce", "impostor_matched"]);
        }
    }
    h
}

fn csv_row(cfg: &BenchConfig, t: &TrialOutcome) -> Vec<String> {
    let matched = |pce: f64| u8::from(pce >= cfg.pce_threshold).to_string();
    let mut row = vec![
        t.trial.to_string(),
        t.noise_sigma.to_string(),
        t.delta_rho.to_string(),
        t.true_scale.to_string(),
        t.true_angle.to_string(),
        (t.known.scale - t.true_scale).to_string(),
        (t.known.angle - t.true_angle).to_string(),
        t.known.pce.to_string(),
        matched(t.known.pce),
    ];
    if let Some(f) = &t.full {
        row.extend([
            t.true_shift.0.to_string(),
            t.true_shift.1.to_string(),
            (f.scale - t.true_scale).to_string(),
            (f.angle - t.true_angle).to_string(),
            (f.shift.0 - t.true_shift.0).to_string(),
            (f.shift.1 - t.true_shift.1).to_string(),
            f.pce.to_string(),
            matched(f.pce),
            f.evaluations.to_string(),
        ]);
        if let Some(i) = &t.impostor {
            row.extend([i.pce.to_string(), matched(i.pce)]);
        }
    }
    row
}

/// Writes the per-trial table. Floats use the shortest representation that
/// round-trips, so the bytes depend only on the values.
pub fn write_csv<W: Write>(cfg: &BenchConfig, outcomes: &[TrialOutcome], out: W) -> Result<()> {
    let to_err = |e: csv::Error| Error::invalid(format!("CSV output: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(cfg.mode, cfg.impostors)).map_err(to_err)?;
    for t in outcomes {
        w.write_record(csv_row(cfg, t)).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("CSV output: {e}")))
}

/// Aggregates at one crop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropSummary {
    pub delta_rho: f64,
    pub trials: usize,
    /// Known-shift path: fraction with scale and angle within tolerance.
    pub known_recovery_rate: f64,
    pub known_tpr: f64,
    pub full_tpr: Option<f64>,
    /// Full path: fraction with the shift within one pixel.
    pub full_shift_rate: Option<f64>,
    /// Full path: fraction matched with the shift within one pixel.
    pub full_success_rate: Option<f64>,
    pub impostor_fpr: Option<f64>,
    pub mean_transform_seconds: f64,
    pub mean_known_seconds: f64,
    pub mean_full_seconds: Option<f64>,
    pub mean_full_evaluations: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub config: BenchConfig,
    pub crops: Vec<CropSummary>,
}

fn rate(hits: impl Iterator<Item = bool>) -> f64 {
    let (n, k) = hits.fold((0usize, 0usize), |(n, k), h| (n + 1, k + usize::from(h)));
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (n, s) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn summarize(cfg: &BenchConfig, outcomes: &[TrialOutcome]) -> BenchSummary {
    let thr = cfg.pce_threshold;
    let crops = cfg
        .delta_rho
        .iter()
        .map(|&d| {
            let ts: Vec<&TrialOutcome> = outcomes.iter().filter(|t| t.delta_rho == d).collect();
            let fulls: Vec<(&TrialOutcome, &PathOutcome)> = ts.iter().filter_map(|t| t.full.as_ref().map(|f| (*t, f))).collect();
            let imps: Vec<&PathOutcome> = ts.iter().filter_map(|t| t.impostor.as_ref()).collect();
            let shift_ok = |t: &TrialOutcome, f: &PathOutcome| (f.shift.0 - t.true_shift.0).abs() <= 1 && (f.shift.1 - t.true_shift.1).abs() <= 1;
            let some = |present: bool, v: f64| present.then_some(v);
            CropSummary {
                delta_rho: d,
                trials: ts.len(),
                known_recovery_rate: rate(ts.iter().map(|t| {
                    (t.known.scale - t.true_scale).abs() <= SCALE_TOLERANCE && (t.known.angle - t.true_angle).abs() <= ANGLE_TOLERANCE
                })),
                known_tpr: rate(ts.iter().map(|t| t.known.pce >= thr)),
                full_tpr: some(!fulls.is_empty(), rate(fulls.iter().map(|(_, f)| f.pce >= thr))),
                full_shift_rate: some(!fulls.is_empty(), rate(fulls.iter().map(|(t, f)| shift_ok(t, f)))),
                full_success_rate: some(!fulls.is_empty(), rate(fulls.iter().map(|(t, f)| f.pce >= thr && shift_ok(t, f)))),
                impostor_fpr: some(!imps.is_empty(), rate(imps.iter().map(|i| i.pce >= thr))),
                mean_transform_seconds: mean(ts.iter().map(|t| t.transform_time)),
                mean_known_seconds: mean(ts.iter().map(|t| t.known.elapsed)),
                mean_full_seconds: some(!fulls.is_empty(), mean(fulls.iter().map(|(_, f)| f.elapsed))),
                mean_full_evaluations: some(!fulls.is_empty(), mean(fulls.iter().map(|(_, f)| f.evaluations as f64))),
            }
        })
        .collect();
    BenchSummary { config: cfg.clone(), crops }
}

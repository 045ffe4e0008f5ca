//! Shift search with closed-form scale and rotation, geometric compensation
//! and the final PCE decision.
//!
//! The alignment model is `W = S R (K(x - c))`: the fingerprint is first
//! translated by an integer `c`, then scaled and rotated about the image
//! center. As a single [`SimilarityParams`] this is `(s, a, s R c)`.

mod context;
mod ga;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use context::{fft_size_for, Fitness, FitnessContext, ReferenceContext};
pub use ga::{GaConfig, GaOutcome};

use crate::error::{Error, Result};
use crate::imgcore::{warp, GrayImage, SimilarityParams};
use crate::spectral::{pce, PceResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// Integer pre-transform shift `c` of the fingerprint.
    pub shift: (i32, i32),
    /// Full transform taking the fingerprint onto the residual.
    pub params: SimilarityParams,
    /// Correlation peak of the shift objective at `shift`.
    pub fitness: f64,
    /// Correlation peak of the final scale/rotation estimate.
    pub confidence: f64,
    pub pce: Option<PceResult>,
    /// Distinct evaluations of the shift objective.
    pub evaluations: usize,
    /// Seconds spent in the alignment.
    pub elapsed: f64,
    pub low_confidence: bool,
}

/// Full similarity transform of shift-then-scale/rotate.
pub fn transform_for(scale: f64, angle: f64, shift: (i32, i32)) -> Result<SimilarityParams> {
    let linear = SimilarityParams::new(scale, angle, 0.0, 0.0)?;
    let (tx, ty) = linear.apply(shift.0 as f64, shift.1 as f64);
    SimilarityParams::new(scale, angle, tx, ty)
}

/// Objective of the shift search at `c` (see [`FitnessContext::fitness`]).
pub fn fitness(c: (i32, i32), ctx: &FitnessContext<'_>) -> Result<Fitness> {
    let (lo, hi) = ctx.ranges().shift.integer_bounds()?;
    if !(lo..=hi).contains(&c.0) || !(lo..=hi).contains(&c.1) {
        return Err(Error::invalid(format!("shift {c:?} outside [{lo}, {hi}]")));
    }
    ctx.fitness(c)
}

/// Largest shift correction, per axis, proposed by the spatial correlation.
pub const MAX_SHIFT_CORRECTION: i32 = 8;

const REFINEMENT_PASSES: usize = 3;

fn params_at(ctx: &FitnessContext<'_>, shift: (i32, i32)) -> Result<(SimilarityParams, f64)> {
    let ranges = ctx.ranges();
    let est = ctx.estimate_at(shift)?;
    let params = transform_for(ranges.scale.clamp(est.scale), ranges.angle.clamp(est.angle), shift)?;
    Ok((params, est.peak))
}

// Leftover translation of a compensation peak, mapped back through
// `(s R)^-1` onto the pre-transform shift. `None` when it is zero, too large
// or leaves the shift range.
fn corrected_shift(ctx: &FitnessContext<'_>, shift: (i32, i32), params: &SimilarityParams, peak: (i64, i64)) -> Result<Option<(i32, i32)>> {
    let linear = SimilarityParams::new(params.scale, params.angle, 0.0, 0.0)?.invert();
    let (dx, dy) = linear.apply(peak.0 as f64, peak.1 as f64);
    let (dx, dy) = (dx.round() as i32, dy.round() as i32);
    let (lo, hi) = ctx.ranges().shift.integer_bounds()?;
    let refined = (shift.0 + dx, shift.1 + dy);
    let accept = (dx, dy) != (0, 0)
        && dx.abs() <= MAX_SHIFT_CORRECTION
        && dy.abs() <= MAX_SHIFT_CORRECTION
        && (lo..=hi).contains(&refined.0)
        && (lo..=hi).contains(&refined.1);
    Ok(accept.then_some(refined))
}

fn test(ctx: &FitnessContext<'_>, params: &SimilarityParams) -> Result<PceResult> {
    compensate_and_test(ctx.residual(), ctx.reference().fingerprint(), params, None)
}

// The shift objective is sampled on a coarse grid and its optimum can sit a
// few pixels off; a wrong shift can also be traded against a slightly wrong
// scale and angle. Corrections come from the spatial correlation of the
// compensated fingerprint and are kept only when they raise its PCE.
fn finish(ctx: &FitnessContext<'_>, best: Option<Fitness>, shift: (i32, i32), evaluations: usize, floor: f64, started: Instant) -> Result<AlignmentResult> {
    let mut shift = shift;
    let (mut params, mut confidence) = params_at(ctx, shift)?;
    if let Some(coarse) = best {
        let mut current = test(ctx, &params)?;
        // The coarse estimate tolerates a slightly wrong shift far better
        // than the fine one, so it proposes first.
        let ranges = ctx.ranges();
        let coarse = transform_for(ranges.scale.clamp(coarse.scale), ranges.angle.clamp(coarse.angle), shift)?;
        let mut proposals = vec![corrected_shift(ctx, shift, &params, current.peak_pos)?];
        proposals.push(corrected_shift(ctx, shift, &coarse, test(ctx, &coarse)?.peak_pos)?);
        let mut accepted = 0;
        let mut tried = vec![shift];
        while let Some(proposal) = proposals.pop() {
            let Some(next) = proposal.filter(|c| !tried.contains(c)) else { continue };
            tried.push(next);
            let (p, conf) = params_at(ctx, next)?;
            let outcome = test(ctx, &p)?;
            if outcome.pce <= current.pce {
                continue;
            }
            (shift, params, confidence, current) = (next, p, conf, outcome);
            accepted += 1;
            if accepted == REFINEMENT_PASSES {
                break;
            }
            proposals.push(corrected_shift(ctx, shift, &params, current.peak_pos)?);
        }
    }
    Ok(AlignmentResult {
        shift,
        params,
        fitness: best.map_or(confidence, |f| f.value),
        confidence,
        pce: None,
        evaluations,
        elapsed: started.elapsed().as_secs_f64(),
        low_confidence: best.map_or(confidence, |f| f.value) < floor,
    })
}

/// Genetic search over integer shifts in `ranges.shift` squared, followed by
/// a scale/rotation estimate at the best shift.
pub fn ga_search(ctx: &FitnessContext<'_>, cfg: &GaConfig) -> Result<AlignmentResult> {
    let started = Instant::now();
    let bounds = ctx.ranges().shift.integer_bounds()?;
    let out = ga::run(ctx, bounds, cfg)?;
    finish(ctx, Some(out.fitness), out.best, out.evaluations, cfg.confidence_floor, started)
}

/// Solves for the transform taking the fingerprint onto the residual.
///
/// A degenerate shift range skips the optimizer: scale and rotation are read
/// off directly at the known shift. Scale and angle are clamped into their ranges.
pub fn align(ctx: &FitnessContext<'_>, cfg: &GaConfig) -> Result<AlignmentResult> {
    cfg.validate()?;
    let (lo, hi) = ctx.ranges().shift.integer_bounds()?;
    if lo == hi {
        return align_known(ctx, (lo, lo), cfg);
    }
    ga_search(ctx, cfg)
}

/// Scale and rotation at a known shift `c`, without any optimizer
/// evaluation. `c` need not lie in the configured shift range.
pub fn align_known(ctx: &FitnessContext<'_>, c: (i32, i32), cfg: &GaConfig) -> Result<AlignmentResult> {
    finish(ctx, None, c, 0, cfg.confidence_floor, Instant::now())
}

/// Warps the fingerprint by `params` (multiplied by `frame` when given) and
/// returns its PCE against the residual.
pub fn compensate_and_test(residual: &GrayImage, k: &GrayImage, params: &SimilarityParams, frame: Option<&GrayImage>) -> Result<PceResult> {
    let mut reference = warp(k, params, residual.dims());
    if let Some(frame) = frame {
        reference = reference.zip_map(frame, |k, i| k * i)?;
    }
    pce(residual, &reference)
}

/// Maximum PCE over frames and the index of the first frame reaching it.
pub fn fuse_frames(results: &[PceResult]) -> Result<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, r) in results.iter().enumerate() {
        if best.is_none_or(|(v, _)| r.pce > v) {
            best = Some((r.pce, i));
        }
    }
    best.ok_or(Error::EmptyList)
}

#[cfg(test)]
mod tests;

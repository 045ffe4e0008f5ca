//! Attribution reports: one record per analyzed frame plus a fused verdict,
//! serialized as JSON lines.

use serde::{Deserialize, Serialize};

use crate::search::AlignmentResult;
use crate::spectral::PceResult;

/// Decision threshold on the PCE.
pub const DEFAULT_PCE_THRESHOLD: f64 = 60.0;

/// Rows of the paper-scale log-polar axis that a `delta_rho` value refers to.
pub const REFERENCE_RHO_ROWS: f64 = 2896.0;

/// Default crop in rows of the reference axis.
pub const DEFAULT_DELTA_RHO: f64 = 800.0;

/// Fraction of a log-polar axis kept by a crop of `delta_rho` reference rows.
pub fn delta_rho_fraction(delta_rho: f64) -> f64 {
    delta_rho / REFERENCE_RHO_ROWS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Matched,
    Unmatched,
}

impl Decision {
    pub fn from_pce(pce: f64, threshold: f64) -> Self {
        if pce >= threshold {
            Decision::Matched
        } else {
            Decision::Unmatched
        }
    }

    pub fn is_match(self) -> bool {
        self == Decision::Matched
    }
}

/// Wall-clock seconds spent per stage of one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Residual extraction and its spectral transforms.
    pub transform: f64,
    /// Alignment, including the optimizer when it runs.
    pub search: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub frame_id: String,
    pub device_id: String,
    pub scale: f64,
    /// Degrees.
    pub angle: f64,
    /// Integer pre-transform shift of the fingerprint.
    pub cx: i32,
    pub cy: i32,
    /// Translation of the full transform, `s R (cx, cy)`.
    pub shift_x: f64,
    pub shift_y: f64,
    pub pce: f64,
    pub decision: Decision,
    pub threshold: f64,
    pub delta_rho: f64,
    pub evaluations: usize,
    pub low_confidence: bool,
    pub timings: Timings,
    pub seed: u64,
}

impl AttributionReport {
    /// The decision is derived from `pce` and `threshold`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        frame_id: impl Into<String>,
        device_id: impl Into<String>,
        alignment: &AlignmentResult,
        pce: &PceResult,
        threshold: f64,
        delta_rho: f64,
        timings: Timings,
        seed: u64,
    ) -> Self {
        let p = alignment.params;
        Self {
            frame_id: frame_id.into(),
            device_id: device_id.into(),
            scale: p.scale,
            angle: p.angle,
            cx: alignment.shift.0,
            cy: alignment.shift.1,
            shift_x: p.shift_x,
            shift_y: p.shift_y,
            pce: pce.pce,
            decision: Decision::from_pce(pce.pce, threshold),
            threshold,
            delta_rho,
            evaluations: alignment.evaluations,
            low_confidence: alignment.low_confidence,
            timings,
            seed,
        }
    }
}

/// Verdict over all successfully analyzed frames of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedReport {
    pub device_id: String,
    pub pce: f64,
    /// Frame holding the maximum PCE.
    pub frame_id: String,
    pub decision: Decision,
    pub threshold: f64,
    pub frames: usize,
    pub failed: usize,
    pub seed: u64,
}

/// A frame that could not be analyzed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameError {
    pub frame_id: String,
    pub error: String,
}

/// One line of a report stream. The tag lives in a `record` field next to the
/// payload, so frame lines also parse directly as [`AttributionReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum ReportLine {
    Frame(AttributionReport),
    Error(FrameError),
    Fused(FusedReport),
}

impl ReportLine {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report lines serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::SimilarityParams;
    use proptest::prelude::*;

    fn alignment(params: SimilarityParams) -> AlignmentResult {
        AlignmentResult {
            shift: (3, -4),
            params,
            fitness: 0.2,
            confidence: 0.3,
            pce: None,
            evaluations: 2550,
            elapsed: 0.5,
            low_confidence: false,
        }
    }

    fn pce(v: f64) -> PceResult {
        PceResult { pce: v, peak_pos: (0, 0), peak_value: 0.1, plane_energy: 1e-4 }
    }

    #[test]
    fn decision_is_inclusive_at_the_threshold() {
        assert_eq!(Decision::from_pce(60.0, 60.0), Decision::Matched);
        assert_eq!(Decision::from_pce(59.999, 60.0), Decision::Unmatched);
        let r = AttributionReport::new("f", "d", &alignment(SimilarityParams::IDENTITY), &pce(61.0), 60.0, 800.0, Timings::default(), 1);
        assert!(r.decision.is_match());
        assert_eq!((r.cx, r.cy), (3, -4));
    }

    #[test]
    fn frame_lines_parse_as_reports() {
        let r = AttributionReport::new("a.png", "cam", &alignment(SimilarityParams::IDENTITY), &pce(12.5), 60.0, 800.0, Timings::default(), 7);
        let line = ReportLine::Frame(r.clone()).to_json();
        assert!(line.contains("\"record\":\"frame\""), "{line}");
        assert_eq!(serde_json::from_str::<AttributionReport>(&line).unwrap(), r);
        assert_eq!(serde_json::from_str::<ReportLine>(&line).unwrap(), ReportLine::Frame(r));
    }

    #[test]
    fn delta_rho_maps_onto_a_fraction() {
        assert_eq!(delta_rho_fraction(REFERENCE_RHO_ROWS), 1.0);
        assert!((delta_rho_fraction(DEFAULT_DELTA_RHO) - 800.0 / 2896.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn reports_round_trip_losslessly(
            s in 0.5f64..2.0, a in -179.0f64..180.0, tx in -1e3f64..1e3, ty in -1e3f64..1e3,
            v in 0.0f64..1e6, threshold in 1e-3f64..1e3, dr in 1.0f64..2896.0,
            t in (0.0f64..1e3, 0.0f64..1e3, 0.0f64..1e3), seed in any::<u64>(), id in "[a-z0-9_./-]{0,12}",
        ) {
            let params = SimilarityParams::new(s, a, tx, ty).unwrap();
            let timings = Timings { transform: t.0, search: t.1, total: t.2 };
            let r = AttributionReport::new(id.clone(), "dev", &alignment(params), &pce(v), threshold, dr, timings, seed);
            prop_assert_eq!(r.decision.is_match(), v >= threshold);
            let back: ReportLine = serde_json::from_str(&ReportLine::Frame(r.clone()).to_json()).unwrap();
            prop_assert_eq!(back, ReportLine::Frame(r));
            let fused = ReportLine::Fused(FusedReport {
                device_id: "dev".into(), pce: v, frame_id: id, decision: Decision::from_pce(v, threshold),
                threshold, frames: 3, failed: 1, seed,
            });
            prop_assert_eq!(serde_json::from_str::<ReportLine>(&fused.to_json()).unwrap(), fused);
        }
    }
}

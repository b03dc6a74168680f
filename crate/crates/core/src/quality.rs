//! Quality scoring, per-frame threshold selection, and retention.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mask::{frame_ious, track_iou, MaskTrack};
use crate::nms::{check_ratio, DetectionSet, DetectionTrack, FloorMode};

/// Thresholds and constants for one self-training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityConfig {
    /// Quality threshold for frame selection.
    pub tau_th: f64,
    /// Threshold used instead of `tau_th` by the confidence-only scorer.
    pub confidence_only_tau: f64,
    pub conf_floor: f64,
    pub floor_mode: FloorMode,
    pub nms_iou: f64,
    /// DropLoss gate threshold on max ground-truth IoU.
    pub drop_iou: f64,
    pub rounds: u32,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            tau_th: 0.75,
            confidence_only_tau: 0.85,
            conf_floor: 0.25,
            floor_mode: FloorMode::Inclusive,
            nms_iou: 0.5,
            drop_iou: 0.01,
            rounds: 2,
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Result<()> {
        check_ratio("tau_th", self.tau_th)?;
        check_ratio("confidence_only_tau", self.confidence_only_tau)?;
        check_ratio("conf_floor", self.conf_floor)?;
        check_ratio("nms_iou", self.nms_iou)?;
        check_ratio("drop_iou", self.drop_iou)?;
        if self.nms_iou == 0.0 {
            return Err(Error::OutOfRange {
                name: "nms_iou",
                value: 0.0,
            });
        }
        if self.rounds == 0 {
            return Err(Error::OutOfRange {
                name: "rounds",
                value: 0.0,
            });
        }
        Ok(())
    }

    /// The selection threshold that applies to `scorer`.
    pub fn threshold_for(&self, scorer: &Scorer<'_>) -> f64 {
        match scorer {
            Scorer::ConfidenceOnly => self.confidence_only_tau,
            _ => self.tau_th,
        }
    }
}

/// Source of the per-frame IoU estimate multiplied into the quality score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scorer<'a> {
    /// Uses the detection's own predicted IoU (confidence only if absent).
    PredictedIou,
    /// Uses 1.0 as the IoU estimate, so quality equals confidence.
    ConfidenceOnly,
    /// True frame IoU against the best-matching ground-truth track of the video.
    OracleIou(&'a [MaskTrack]),
}

/// Index of the ground-truth track with the highest track IoU to `masks`
/// (first on ties), or `None` without ground truth.
pub fn best_match(masks: &MaskTrack, ground_truth: &[MaskTrack]) -> Result<Option<usize>> {
    let mut best: Option<(f64, usize)> = None;
    for (i, gt) in ground_truth.iter().enumerate() {
        let iou = track_iou(masks, gt)?;
        if best.is_none_or(|(b, _)| iou > b) {
            best = Some((iou, i));
        }
    }
    Ok(best.map(|(_, i)| i))
}

/// Per-frame IoU of `masks` against its best-matching ground-truth track.
///
/// Frames where both are empty count as agreement (1.0). With no ground
/// truth the comparison is against an absent track.
pub fn true_frame_ious(masks: &MaskTrack, ground_truth: &[MaskTrack]) -> Result<Vec<f64>> {
    let absent;
    let matched = match best_match(masks, ground_truth)? {
        Some(i) => &ground_truth[i],
        None => {
            absent = MaskTrack::absent(masks.len());
            &absent
        }
    };
    Ok(frame_ious(masks, matched)?
        .into_iter()
        .map(|v| v.unwrap_or(1.0))
        .collect())
}

/// `Q_t = score * iou_estimate_t` for every frame.
pub fn quality_scores(det: &DetectionTrack, scorer: &Scorer<'_>) -> Result<Vec<f64>> {
    let n = det.num_frames();
    let s = det.score;
    Ok(match scorer {
        Scorer::PredictedIou => match &det.pred_iou {
            Some(p) => {
                if p.len() != n {
                    return Err(Error::LengthMismatch(p.len(), n));
                }
                p.iter().map(|&v| s * v).collect()
            }
            None => vec![s; n],
        },
        Scorer::ConfidenceOnly => vec![s; n],
        Scorer::OracleIou(gts) => true_frame_ious(&det.masks, gts)?
            .into_iter()
            .map(|v| s * v)
            .collect(),
    })
}

/// Inclusive threshold: a frame is selected iff its quality is at least `tau`.
pub fn select_frames(q: &[f64], tau: f64) -> Vec<bool> {
    q.iter().map(|&v| v >= tau).collect()
}

/// Scores every detection and writes its selection flags.
pub fn apply_selection(dets: &DetectionSet, scorer: &Scorer<'_>, tau: f64) -> Result<DetectionSet> {
    let mut out = dets.clone();
    for d in &mut out.detections {
        let q = quality_scores(d, scorer)?;
        d.selected = Some(select_frames(&q, tau));
    }
    Ok(out)
}

/// Drops detections that are not selected in any frame.
pub fn retain(dets: &DetectionSet) -> Result<DetectionSet> {
    let mut kept = Vec::with_capacity(dets.len());
    for d in &dets.detections {
        let flags = d
            .selected
            .as_ref()
            .ok_or_else(|| Error::SelectionUnset(d.detection_id.clone()))?;
        if flags.iter().any(|&f| f) {
            kept.push(d.clone());
        }
    }
    Ok(DetectionSet {
        video_id: dets.video_id.clone(),
        num_frames: dets.num_frames,
        detections: kept,
    })
}

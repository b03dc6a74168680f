//! Detection sets: confidence filtering, ordering, and spatiotemporal NMS.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::mask::{any_frame_overlap, MaskTrack};

/// One instance hypothesis over a whole video.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTrack {
    pub detection_id: String,
    pub video_id: String,
    /// Confidence in `[0, 1]`.
    pub score: f64,
    pub masks: MaskTrack,
    /// Per-frame predicted mask IoU. `None` when the producer did not emit
    /// quality predictions; scorers then fall back to confidence only.
    pub pred_iou: Option<Vec<f64>>,
    /// Per-frame selection flags, populated by the quality gate.
    pub selected: Option<Vec<bool>>,
}

impl DetectionTrack {
    pub fn new(
        detection_id: impl Into<String>,
        video_id: impl Into<String>,
        score: f64,
        masks: MaskTrack,
    ) -> Self {
        Self {
            detection_id: detection_id.into(),
            video_id: video_id.into(),
            score,
            masks,
            pred_iou: None,
            selected: None,
        }
    }

    pub fn with_pred_iou(mut self, pred_iou: Vec<f64>) -> Self {
        self.pred_iou = Some(pred_iou);
        self
    }

    pub fn with_selected(mut self, selected: Vec<bool>) -> Self {
        self.selected = Some(selected);
        self
    }

    pub fn num_frames(&self) -> usize {
        self.masks.len()
    }

    /// Checks length and range invariants against the owning video.
    pub fn validate(&self, num_frames: usize) -> Result<()> {
        if self.masks.len() != num_frames {
            return Err(Error::LengthMismatch(self.masks.len(), num_frames));
        }
        check_ratio("score", self.score)?;
        if let Some(p) = &self.pred_iou {
            if p.len() != num_frames {
                return Err(Error::LengthMismatch(p.len(), num_frames));
            }
            for &v in p {
                check_ratio("pred_iou", v)?;
            }
        }
        if let Some(s) = &self.selected {
            if s.len() != num_frames {
                return Err(Error::LengthMismatch(s.len(), num_frames));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_ratio(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value })
    }
}

/// All detections for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub video_id: String,
    pub num_frames: usize,
    pub detections: Vec<DetectionTrack>,
}

impl DetectionSet {
    pub fn new(video_id: impl Into<String>, num_frames: usize) -> Self {
        Self {
            video_id: video_id.into(),
            num_frames,
            detections: Vec::new(),
        }
    }

    pub fn with_detections(mut self, detections: Vec<DetectionTrack>) -> Self {
        self.detections = detections;
        self
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for d in &self.detections {
            if d.video_id != self.video_id {
                return Err(Error::VideoMismatch {
                    detection_id: d.detection_id.clone(),
                    expected: self.video_id.clone(),
                    found: d.video_id.clone(),
                });
            }
            d.validate(self.num_frames)?;
        }
        Ok(())
    }

    fn map_detections(&self, detections: Vec<DetectionTrack>) -> Self {
        Self {
            video_id: self.video_id.clone(),
            num_frames: self.num_frames,
            detections,
        }
    }
}

/// Whether the confidence floor itself passes the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FloorMode {
    /// `score >= floor`
    #[default]
    Inclusive,
    /// `score > floor`
    Exclusive,
}

/// Keeps detections whose score clears `min_score`, preserving order.
pub fn confidence_filter(dets: &DetectionSet, min_score: f64, mode: FloorMode) -> DetectionSet {
    let kept = dets
        .detections
        .iter()
        .filter(|d| match mode {
            FloorMode::Inclusive => d.score >= min_score,
            FloorMode::Exclusive => d.score > min_score,
        })
        .cloned()
        .collect();
    dets.map_detections(kept)
}

/// Descending score, ties by ascending detection id.
pub fn confidence_order(a: &DetectionTrack, b: &DetectionTrack) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.detection_id.cmp(&b.detection_id))
}

pub fn sort_by_confidence(dets: &DetectionSet) -> DetectionSet {
    let mut sorted = dets.detections.clone();
    sorted.sort_by(confidence_order);
    dets.map_detections(sorted)
}

/// Greedy spatiotemporal NMS.
///
/// Walks detections in confidence order and keeps one iff no already-kept
/// detection reaches `iou_thresh` IoU with it in at least one frame.
pub fn spatiotemporal_nms(dets: &DetectionSet, iou_thresh: f64) -> Result<DetectionSet> {
    let sorted = sort_by_confidence(dets);
    let mut kept: Vec<DetectionTrack> = Vec::with_capacity(sorted.len());
    for d in sorted.detections {
        let mut suppressed = false;
        for k in &kept {
            if any_frame_overlap(&k.masks, &d.masks, iou_thresh)? {
                suppressed = true;
                break;
            }
        }
        if !suppressed {
            kept.push(d);
        }
    }
    Ok(dets.map_detections(kept))
}

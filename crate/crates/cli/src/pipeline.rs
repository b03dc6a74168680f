//! One curation round over a detection dump, parallel across videos.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vistrain_core::dataset::{augment, Provenance, TrainingDataset};
use vistrain_core::eval::GroundTruthVideo;
use vistrain_core::mask::{frame_ious, MaskTrack};
use vistrain_core::nms::{confidence_filter, spatiotemporal_nms, DetectionSet};
use vistrain_core::quality::{apply_selection, best_match, quality_scores, retain, Scorer};

use crate::config::{RunConfig, ScorerKind};
use crate::error::Result;

/// Ground-truth mask tracks keyed by video id.
pub type GtIndex = BTreeMap<String, Vec<MaskTrack>>;

pub fn gt_index(gts: &[GroundTruthVideo]) -> GtIndex {
    gts.iter().map(|g| (g.video_id.clone(), g.mask_tracks())).collect()
}

/// Detection counts after each stage, and how the retained ones entered the
/// dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundCounts {
    pub raw: usize,
    pub filtered: usize,
    pub post_nms: usize,
    pub retained: usize,
    pub fused: usize,
    pub new_videos: usize,
    pub new_video_inserted: usize,
    pub inserted: usize,
}

fn scorer<'a>(kind: ScorerKind, video_id: &str, gt: Option<&'a GtIndex>) -> Result<Scorer<'a>> {
    Ok(match kind {
        ScorerKind::Predicted => Scorer::PredictedIou,
        ScorerKind::Confidence => Scorer::ConfidenceOnly,
        ScorerKind::Oracle => {
            let tracks = gt
                .and_then(|g| g.get(video_id))
                .ok_or_else(|| vistrain_core::Error::MissingGroundTruth(video_id.to_string()))?;
            Scorer::OracleIou(tracks)
        }
    })
}

/// Filter, suppress, score, select and retain every video of a dump.
pub fn curate(dump: &[DetectionSet], cfg: &RunConfig, gt: Option<&GtIndex>) -> Result<(Vec<DetectionSet>, RoundCounts)> {
    let q = cfg.quality();
    q.validate()?;
    let tau = cfg.tau();
    let per_video: Vec<(DetectionSet, [usize; 4])> = dump
        .par_iter()
        .map(|set| -> Result<_> {
            set.validate()?;
            let filtered = confidence_filter(set, q.conf_floor, q.floor_mode);
            let kept = spatiotemporal_nms(&filtered, q.nms_iou)?;
            let selected = apply_selection(&kept, &scorer(cfg.scorer, &set.video_id, gt)?, tau)?;
            let retained = retain(&selected)?;
            let n = [set.len(), filtered.len(), kept.len(), retained.len()];
            Ok((retained, n))
        })
        .collect::<Result<_>>()?;
    let mut counts = RoundCounts::default();
    let mut out = Vec::with_capacity(per_video.len());
    for (set, [raw, filtered, post_nms, retained]) in per_video {
        counts.raw += raw;
        counts.filtered += filtered;
        counts.post_nms += post_nms;
        counts.retained += retained;
        out.push(set);
    }
    Ok((out, counts))
}

/// Curates a dump and folds the result into the dataset.
pub fn run_round(
    dataset: &TrainingDataset,
    dump: &[DetectionSet],
    cfg: &RunConfig,
    gt: Option<&GtIndex>,
) -> Result<(TrainingDataset, RoundCounts)> {
    let (retained, mut counts) = curate(dump, cfg, gt)?;
    let (next, stats, _) = augment(dataset, &retained)?;
    counts.fused = stats.fused_tracks;
    counts.inserted = stats.inserted_tracks;
    counts.new_videos = stats.new_videos;
    counts.new_video_inserted = stats.new_video_tracks;
    Ok((next, counts))
}

/// Stored pseudo-labels as a prediction set, one entry per pseudo video.
pub fn pseudo_predictions(dataset: &TrainingDataset) -> Vec<DetectionSet> {
    dataset
        .videos
        .iter()
        .filter(|(_, v)| v.provenance == Provenance::Pseudo)
        .map(|(id, v)| DetectionSet::new(id.clone(), v.num_frames).with_detections(v.detections().cloned().collect()))
        .collect()
}

/// Per-frame quality score, confidence and true IoU of one detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityPoint {
    pub quality: f64,
    pub confidence: f64,
    pub true_iou: f64,
}

/// Quality points of every detection frame where the detection or its
/// matched ground truth has pixels.
pub fn quality_points(dump: &[DetectionSet], gt: &GtIndex) -> Result<Vec<QualityPoint>> {
    let per_video: Vec<Vec<QualityPoint>> = dump
        .par_iter()
        .map(|set| -> Result<_> {
            let tracks = gt
                .get(&set.video_id)
                .ok_or_else(|| vistrain_core::Error::MissingGroundTruth(set.video_id.clone()))?;
            let mut pts = Vec::new();
            for d in &set.detections {
                let q = quality_scores(d, &Scorer::PredictedIou)?;
                let matched = match best_match(&d.masks, tracks)? {
                    Some(i) => tracks[i].clone(),
                    None => MaskTrack::absent(d.num_frames()),
                };
                for (t, iou) in frame_ious(&d.masks, &matched)?.into_iter().enumerate() {
                    if let Some(iou) = iou {
                        pts.push(QualityPoint { quality: q[t], confidence: d.score, true_iou: iou });
                    }
                }
            }
            Ok(pts)
        })
        .collect::<Result<_>>()?;
    Ok(per_video.into_iter().flatten().collect())
}

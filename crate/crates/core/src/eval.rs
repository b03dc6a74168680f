//! Class-agnostic video instance segmentation metrics and rank correlation.
//!
//! Matching and accumulation follow the COCO/YouTube-VIS protocol with track
//! IoU in place of image IoU: per video, detections are taken in descending
//! score order and greedily matched to the unmatched ground-truth track of
//! highest IoU at each threshold; precision is interpolated at 101 recall
//! points. Ground truth outside an area bucket is ignored rather than
//! counted as missed.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mask::{track_iou, MaskTrack};
use crate::nms::{confidence_order, DetectionSet, DetectionTrack};

/// Track IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    core::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// Recall sample points 0.00, 0.01, ..., 1.00.
pub fn recall_thresholds() -> [f64; 101] {
    core::array::from_fn(|i| i as f64 / 100.0)
}

pub const MAX_DETS: usize = 100;
pub const AR_MAX_DETS: usize = 10;

/// COCO area buckets on mean per-frame mask area.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AreaRange {
    All,
    Small,
    Medium,
    Large,
}

impl AreaRange {
    pub const ALL: [AreaRange; 4] = [Self::All, Self::Small, Self::Medium, Self::Large];

    fn bounds(self) -> (f64, f64) {
        match self {
            Self::All => (0.0, 1e10),
            Self::Small => (0.0, 32.0 * 32.0),
            Self::Medium => (32.0 * 32.0, 96.0 * 96.0),
            Self::Large => (96.0 * 96.0, 1e10),
        }
    }

    pub fn contains(self, area: f64) -> bool {
        let (lo, hi) = self.bounds();
        area >= lo && area <= hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTrack {
    pub gt_id: String,
    pub category_id: u64,
    pub masks: MaskTrack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthVideo {
    pub video_id: String,
    pub num_frames: usize,
    pub tracks: Vec<GroundTruthTrack>,
}

impl GroundTruthVideo {
    pub fn mask_tracks(&self) -> Vec<MaskTrack> {
        self.tracks.iter().map(|t| t.masks.clone()).collect()
    }
}

/// Collapses every category to id 1.
pub fn class_agnostic_remap(mut videos: Vec<GroundTruthVideo>) -> Vec<GroundTruthVideo> {
    for t in videos.iter_mut().flat_map(|v| v.tracks.iter_mut()) {
        t.category_id = 1;
    }
    videos
}

/// Mean foreground area over the frames where the object is present.
pub fn mean_present_area(masks: &MaskTrack) -> f64 {
    let (sum, n) = (0..masks.len())
        .map(|t| masks.area(t))
        .filter(|&a| a > 0)
        .fold((0u64, 0u64), |(s, n), a| (s + a, n + 1));
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

/// Interpolated precision at the 101 recall points for one IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub iou_threshold: f64,
    pub precision: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    /// `None` when the bucket holds no ground truth.
    pub ap_s: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
    pub ar1: f64,
    pub ar10: f64,
    pub pr_curves: Vec<PrCurve>,
    pub spearman_rho: Option<f64>,
}

/// Matching outcome of one video for one area bucket and detection cap.
struct VideoEval {
    scores: Vec<f64>,
    /// `[threshold][det]`
    matched: Vec<Vec<bool>>,
    ignored: Vec<Vec<bool>>,
    num_gt: usize,
}

fn evaluate_video(
    dets: &[&DetectionTrack],
    ious: &[Vec<f64>],
    det_areas: &[f64],
    gt_areas: &[f64],
    area: AreaRange,
    max_dets: usize,
) -> VideoEval {
    let thresholds = iou_thresholds();
    let n_det = dets.len().min(max_dets);
    let gt_ignore: Vec<bool> = gt_areas.iter().map(|&a| !area.contains(a)).collect();
    let mut matched = vec![vec![false; n_det]; thresholds.len()];
    let mut ignored = vec![vec![false; n_det]; thresholds.len()];
    for (ti, &thr) in thresholds.iter().enumerate() {
        let mut gt_taken = vec![false; gt_areas.len()];
        for d in 0..n_det {
            // Best unmatched gt: non-ignored beats ignored, then higher IoU,
            // then lower index.
            let mut best: Option<usize> = None;
            for g in 0..gt_areas.len() {
                if gt_taken[g] || ious[d][g] < thr {
                    continue;
                }
                best = match best {
                    None => Some(g),
                    Some(b) => {
                        let key = |i: usize| (!gt_ignore[i], ious[d][i]);
                        let (bi, bv) = key(b);
                        let (gi, gv) = key(g);
                        if gi && !bi || (gi == bi && gv > bv) {
                            Some(g)
                        } else {
                            Some(b)
                        }
                    }
                };
            }
            match best {
                Some(g) => {
                    gt_taken[g] = true;
                    matched[ti][d] = true;
                    ignored[ti][d] = gt_ignore[g];
                }
                None => ignored[ti][d] = !area.contains(det_areas[d]),
            }
        }
    }
    VideoEval {
        scores: dets[..n_det].iter().map(|d| d.score).collect(),
        matched,
        ignored,
        num_gt: gt_ignore.iter().filter(|&&i| !i).count(),
    }
}

/// Per threshold: interpolated precision (or `None` with no ground truth)
/// and final recall.
fn accumulate(evals: &[VideoEval]) -> Vec<(Option<Vec<f64>>, f64)> {
    let num_gt: usize = evals.iter().map(|e| e.num_gt).sum();
    // Stable sort over the concatenation, like COCO's mergesort.
    let mut order: Vec<(f64, usize, usize)> = evals
        .iter()
        .enumerate()
        .flat_map(|(v, e)| e.scores.iter().enumerate().map(move |(d, &s)| (s, v, d)))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let rec_thr = recall_thresholds();

    (0..iou_thresholds().len())
        .map(|ti| {
            if num_gt == 0 {
                return (None, 0.0);
            }
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut recall = Vec::new();
            let mut precision = Vec::new();
            for &(_, v, d) in &order {
                if evals[v].ignored[ti][d] {
                    continue;
                }
                if evals[v].matched[ti][d] {
                    tp += 1;
                } else {
                    fp += 1;
                }
                recall.push(tp as f64 / num_gt as f64);
                precision.push(tp as f64 / (tp + fp) as f64);
            }
            for i in (1..precision.len()).rev() {
                if precision[i] > precision[i - 1] {
                    precision[i - 1] = precision[i];
                }
            }
            let q = rec_thr
                .iter()
                .map(|&r| {
                    let idx = recall.partition_point(|&x| x < r);
                    precision.get(idx).copied().unwrap_or(0.0)
                })
                .collect();
            (Some(q), recall.last().copied().unwrap_or(0.0))
        })
        .collect()
}

fn mean_ap(per_thr: &[(Option<Vec<f64>>, f64)], which: impl Iterator<Item = usize>) -> Option<f64> {
    let vals: Vec<f64> = which
        .filter_map(|ti| per_thr[ti].0.as_ref())
        .map(|q| q.iter().sum::<f64>() / q.len() as f64)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

fn mean_recall(per_thr: &[(Option<Vec<f64>>, f64)]) -> f64 {
    per_thr.iter().map(|(_, r)| r).sum::<f64>() / per_thr.len() as f64
}

struct PreparedVideo<'a> {
    dets: Vec<&'a DetectionTrack>,
    ious: Vec<Vec<f64>>,
    det_areas: Vec<f64>,
    gt_areas: Vec<f64>,
}

/// Class-agnostic AP/AR of `preds` against `gts`.
///
/// Every prediction video must exist in the ground truth; ground-truth
/// videos without predictions simply contribute misses.
pub fn evaluate(preds: &[DetectionSet], gts: &[GroundTruthVideo]) -> Result<EvalReport> {
    let mut gt_sorted: Vec<&GroundTruthVideo> = gts.iter().collect();
    gt_sorted.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    for p in preds {
        if !gts.iter().any(|g| g.video_id == p.video_id) {
            return Err(Error::MissingVideo(p.video_id.clone()));
        }
    }

    let mut prepared = Vec::with_capacity(gt_sorted.len());
    for gt in gt_sorted {
        let mut dets: Vec<&DetectionTrack> = preds
            .iter()
            .filter(|p| p.video_id == gt.video_id)
            .flat_map(|p| p.detections.iter())
            .collect();
        dets.sort_by(|a, b| confidence_order(a, b));
        dets.truncate(MAX_DETS);
        let ious = dets
            .iter()
            .map(|d| {
                gt.tracks
                    .iter()
                    .map(|g| track_iou(&d.masks, &g.masks))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        prepared.push(PreparedVideo {
            det_areas: dets.iter().map(|d| mean_present_area(&d.masks)).collect(),
            gt_areas: gt.tracks.iter().map(|g| mean_present_area(&g.masks)).collect(),
            dets,
            ious,
        });
    }

    let run = |area: AreaRange, max_dets: usize| {
        let evals: Vec<VideoEval> = prepared
            .iter()
            .map(|p| evaluate_video(&p.dets, &p.ious, &p.det_areas, &p.gt_areas, area, max_dets))
            .collect();
        accumulate(&evals)
    };

    let all = run(AreaRange::All, MAX_DETS);
    let n_thr = iou_thresholds().len();
    let bucket = |a| mean_ap(&run(a, MAX_DETS), 0..n_thr);
    let pr_curves = iou_thresholds()
        .iter()
        .zip(&all)
        .map(|(&t, (q, _))| PrCurve {
            iou_threshold: t,
            precision: q.clone().unwrap_or_else(|| vec![0.0; 101]),
        })
        .collect();

    Ok(EvalReport {
        ap: mean_ap(&all, 0..n_thr).unwrap_or(0.0),
        ap50: mean_ap(&all, 0..1).unwrap_or(0.0),
        ap75: mean_ap(&all, 5..6).unwrap_or(0.0),
        ap_s: bucket(AreaRange::Small),
        ap_m: bucket(AreaRange::Medium),
        ap_l: bucket(AreaRange::Large),
        ar1: mean_recall(&run(AreaRange::All, 1)),
        ar10: mean_recall(&run(AreaRange::All, AR_MAX_DETS)),
        pr_curves,
        spearman_rho: None,
    })
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their mean
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho with average ranks for ties. `Ok(None)` when either input
/// is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::OutOfRange {
            name: "sample size",
            value: x.len() as f64,
        });
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_fixtures() {
        let inc = [1.0, 2.0, 3.0, 4.0, 5.0];
        let dec = [9.0, 7.0, 5.0, 3.0, 1.0];
        assert_eq!(spearman(&inc, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap(), Some(1.0));
        assert_eq!(spearman(&inc, &dec).unwrap(), Some(-1.0));
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap().unwrap();
        assert!((r - 0.8).abs() <= 1e-12);
        assert_eq!(spearman(&inc, &[1.0; 5]).unwrap(), None);
        assert!(spearman(&inc, &dec[..4]).is_err());
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn remap_fixtures() {
        let v = |cats: &[u64]| GroundTruthVideo {
            video_id: "v".into(),
            num_frames: 1,
            tracks: cats
                .iter()
                .map(|&c| GroundTruthTrack { gt_id: "g".into(), category_id: c, masks: MaskTrack::absent(1) })
                .collect(),
        };
        let out = class_agnostic_remap(vec![v(&[1, 7, 23])]);
        assert!(out[0].tracks.iter().all(|t| t.category_id == 1));
        assert_eq!(class_agnostic_remap(vec![v(&[1, 1])]), vec![v(&[1, 1])]);
        assert!(class_agnostic_remap(Vec::new()).is_empty());
    }

    #[test]
    fn area_buckets() {
        assert!(AreaRange::Small.contains(1024.0));
        assert!(AreaRange::Medium.contains(1024.0));
        assert!(!AreaRange::Large.contains(9215.0));
        assert_eq!(iou_thresholds()[1], 0.55);
        assert_eq!(recall_thresholds()[100], 1.0);
    }
}

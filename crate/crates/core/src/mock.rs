//! Seeded stand-in for the segmentation model and its quality predictor.
//!
//! [`synth_ground_truth`] draws videos of moving ellipses; [`generate_dump`]
//! turns ground truth into model-like detections by perturbing each track
//! toward a target IoU, attaching a noisy confidence and noisy per-frame
//! predicted IoU, and sprinkling low-overlap false positives.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::eval::{GroundTruthTrack, GroundTruthVideo};
use crate::mask::{rle_decode, rle_encode, track_iou, Bitmap, FrameMask, MaskTrack};
use crate::nms::{DetectionSet, DetectionTrack};
use crate::quality::true_frame_ious;

/// Per-frame tolerance around the requested IoU.
pub const IOU_TOLERANCE: f64 = 0.05;
/// Candidate evaluations per frame before settling for the closest.
pub const MAX_SEARCH_STEPS: u32 = 50;
/// Masks smaller than this are returned unperturbed.
pub const MIN_PERTURB_AREA: u64 = 9;
/// False positives are placed below this track IoU to every ground truth.
pub const FP_MAX_IOU: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub target_iou_lo: f64,
    pub target_iou_hi: f64,
    /// Expected false positives per video.
    pub false_positive_rate: f64,
    /// Probability that a ground-truth track gets no detection.
    pub miss_rate: f64,
    /// Probability that a detected track is emitted a second time at lower
    /// confidence (exercises NMS).
    pub duplicate_rate: f64,
    /// Stddev of additive Gaussian noise on predicted IoU and confidence.
    pub iou_predictor_noise: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            target_iou_lo: 0.5,
            target_iou_hi: 1.0,
            false_positive_rate: 1.0,
            miss_rate: 0.1,
            duplicate_rate: 0.2,
            iou_predictor_noise: 0.1,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::OutOfRange { name, value: v })
            }
        };
        unit("target_iou_lo", self.target_iou_lo)?;
        unit("target_iou_hi", self.target_iou_hi)?;
        unit("miss_rate", self.miss_rate)?;
        unit("duplicate_rate", self.duplicate_rate)?;
        if self.target_iou_lo > self.target_iou_hi || self.target_iou_lo <= 0.0 {
            return Err(Error::OutOfRange {
                name: "target_iou_lo",
                value: self.target_iou_lo,
            });
        }
        if !(self.false_positive_rate >= 0.0) {
            return Err(Error::OutOfRange {
                name: "false_positive_rate",
                value: self.false_positive_rate,
            });
        }
        if !(self.iou_predictor_noise >= 0.0) {
            return Err(Error::OutOfRange {
                name: "iou_predictor_noise",
                value: self.iou_predictor_noise,
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// bitmap morphology

fn translate(b: &Bitmap, dx: i32, dy: i32) -> Bitmap {
    let (h, w) = (b.height() as i32, b.width() as i32);
    Bitmap::from_fn(b.height(), b.width(), |r, c| {
        let (sr, sc) = (r as i32 - dy, c as i32 - dx);
        sr >= 0 && sr < h && sc >= 0 && sc < w && b.get(sr as u32, sc as u32)
    })
    .expect("dimensions taken from an existing bitmap")
}

fn combine(a: &Bitmap, b: &Bitmap, op: impl Fn(bool, bool) -> bool) -> Bitmap {
    let bits = a
        .as_column_major()
        .iter()
        .zip(b.as_column_major())
        .map(|(&x, &y)| op(x, y))
        .collect();
    Bitmap::from_column_major(a.height(), a.width(), bits).expect("same dimensions")
}

const CROSS: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

fn dilate(b: &Bitmap, radius: u32) -> Bitmap {
    let mut out = b.clone();
    for _ in 0..radius {
        let step = CROSS
            .iter()
            .fold(out.clone(), |acc, &(dx, dy)| combine(&acc, &translate(&out, dx, dy), |x, y| x || y));
        out = step;
    }
    out
}

fn erode(b: &Bitmap, radius: u32) -> Bitmap {
    let mut out = b.clone();
    for _ in 0..radius {
        let step = CROSS
            .iter()
            .fold(out.clone(), |acc, &(dx, dy)| combine(&acc, &translate(&out, dx, dy), |x, y| x && y));
        out = step;
    }
    out
}

fn bitmap_iou(a: &Bitmap, b: &Bitmap) -> f64 {
    let (mut inter, mut union) = (0u64, 0u64);
    for (&x, &y) in a.as_column_major().iter().zip(b.as_column_major()) {
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

const DIRECTIONS: [(i32, i32); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// The transform families tried in order. Each is indexed by a step `k`
/// with IoU to the source falling (roughly monotonically) as `k` grows.
#[derive(Debug, Clone, Copy)]
enum Family {
    Shift,
    Stretch,
    Shrink,
    DilateShift(u32),
    ErodeShift(u32),
}

fn apply(src: &Bitmap, family: Family, k: u32, dir: (i32, i32)) -> Bitmap {
    let (dx, dy) = dir;
    let k = k as i32;
    match family {
        Family::Shift => translate(src, dx * k, dy * k),
        Family::Stretch => (1..=k).fold(src.clone(), |acc, i| {
            combine(&acc, &translate(src, dx * i, dy * i), |x, y| x || y)
        }),
        Family::Shrink => (1..=k).fold(src.clone(), |acc, i| {
            combine(&acc, &translate(src, dx * i, dy * i), |x, y| x && y)
        }),
        Family::DilateShift(r) => translate(&dilate(src, r), dx * k, dy * k),
        Family::ErodeShift(r) => translate(&erode(src, r), dx * k, dy * k),
    }
}

/// Result of perturbing one mask toward a target IoU.
struct Candidate {
    mask: Bitmap,
    iou: f64,
}

fn perturb_bitmap<R: Rng + ?Sized>(src: &Bitmap, target: f64, rng: &mut R) -> Bitmap {
    let dir = DIRECTIONS[rng.random_range(0..DIRECTIONS.len())];
    let grow_first = rng.random_bool(0.5);
    let mut families = Vec::from([Family::Shift]);
    let (a, b) = if grow_first {
        (Family::Stretch, Family::Shrink)
    } else {
        (Family::Shrink, Family::Stretch)
    };
    families.push(a);
    families.push(b);
    for r in 1..=2 {
        if grow_first {
            families.push(Family::DilateShift(r));
            families.push(Family::ErodeShift(r));
        } else {
            families.push(Family::ErodeShift(r));
            families.push(Family::DilateShift(r));
        }
    }

    let k_max = src.height().max(src.width());
    let mut budget = MAX_SEARCH_STEPS;
    let mut best = Candidate {
        mask: src.clone(),
        iou: 1.0,
    };
    let consider = |mask: Bitmap, best: &mut Candidate| -> f64 {
        let iou = bitmap_iou(&mask, src);
        if (iou - target).abs() < (best.iou - target).abs() {
            *best = Candidate { mask, iou };
        }
        iou
    };
    if (best.iou - target).abs() <= IOU_TOLERANCE {
        return best.mask;
    }
    for family in families {
        // Binary search for the largest k whose IoU stays >= target; the
        // crossing neighbours are both offered as candidates.
        let (mut lo, mut hi) = (0u32, k_max);
        if budget == 0 {
            break;
        }
        budget -= 1;
        if consider(apply(src, family, lo, dir), &mut best) < target {
            // already below target at k = 0 (morphology alone overshoots)
            if (best.iou - target).abs() <= IOU_TOLERANCE {
                return best.mask;
            }
            continue;
        }
        while hi - lo > 1 && budget > 0 {
            let mid = lo + (hi - lo) / 2;
            budget -= 1;
            if consider(apply(src, family, mid, dir), &mut best) >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if budget > 0 {
            budget -= 1;
            consider(apply(src, family, hi, dir), &mut best);
        }
        if (best.iou - target).abs() <= IOU_TOLERANCE {
            return best.mask;
        }
    }
    best.mask
}

/// A perturbed track plus whether any frame was too small to perturb.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub masks: MaskTrack,
    pub tiny_mask_warning: bool,
}

/// Morphs and shifts each present frame until its IoU to the source is
/// within ±0.05 of `target_iou` (closest found after 50 candidates
/// otherwise). Empty and absent frames are left alone.
pub fn perturb_track<R: Rng + ?Sized>(gt: &MaskTrack, target_iou: f64, rng: &mut R) -> Result<Perturbed> {
    if !(target_iou > 0.0 && target_iou <= 1.0) {
        return Err(Error::OutOfRange {
            name: "target_iou",
            value: target_iou,
        });
    }
    let mut warning = false;
    let mut frames = Vec::with_capacity(gt.len());
    for f in gt.frames() {
        let out = match f {
            Some(m) if !m.is_empty() => {
                if m.area() < MIN_PERTURB_AREA {
                    warning = true;
                    Some(m.clone())
                } else {
                    Some(rle_encode(&perturb_bitmap(&rle_decode(m), target_iou, rng)))
                }
            }
            other => other.clone(),
        };
        frames.push(out);
    }
    Ok(Perturbed {
        masks: MaskTrack::new(frames)?,
        tiny_mask_warning: warning,
    })
}

fn noisy<R: Rng + ?Sized>(value: f64, noise: Option<&Normal<f64>>, rng: &mut R) -> f64 {
    let v = match noise {
        Some(n) => value + n.sample(rng),
        None => value,
    };
    v.clamp(0.0, 1.0)
}

fn ellipse(h: u32, w: u32, cy: f64, cx: f64, ry: f64, rx: f64) -> FrameMask {
    let b = Bitmap::from_fn(h, w, |r, c| {
        let y = (r as f64 + 0.5 - cy) / ry;
        let x = (c as f64 + 0.5 - cx) / rx;
        x * x + y * y <= 1.0
    })
    .expect("non-zero frame size");
    rle_encode(&b)
}

fn random_blob_track<R: Rng + ?Sized>(h: u32, w: u32, frames: usize, rng: &mut R) -> MaskTrack {
    let max_r = (h.min(w) as f64 / 6.0).max(2.0);
    let ry = rng.random_range(2.0..=max_r);
    let rx = rng.random_range(2.0..=max_r);
    let mut cy = rng.random_range(0.0..h as f64);
    let mut cx = rng.random_range(0.0..w as f64);
    let vy = rng.random_range(-1.0..=1.0);
    let vx = rng.random_range(-1.0..=1.0);
    let masks = (0..frames)
        .map(|_| {
            let m = ellipse(h, w, cy, cx, ry, rx);
            cy += vy;
            cx += vx;
            Some(m)
        })
        .collect();
    MaskTrack::new(masks).expect("uniform frame size")
}

/// Produces one detection set per ground-truth video.
pub fn generate_dump(gts: &[GroundTruthVideo], cfg: &NoiseConfig) -> Result<Vec<DetectionSet>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = if cfg.iou_predictor_noise > 0.0 {
        Some(Normal::new(0.0, cfg.iou_predictor_noise).map_err(|_| Error::OutOfRange {
            name: "iou_predictor_noise",
            value: cfg.iou_predictor_noise,
        })?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(gts.len());
    for video in gts {
        let gt_masks = video.mask_tracks();
        let mut set = DetectionSet::new(video.video_id.clone(), video.num_frames);
        let mut next_id = 0usize;
        let mut emit = |set: &mut DetectionSet, masks: MaskTrack, score: f64, pred_iou: Vec<f64>| {
            let id = format!("s{:x}-{:04}", cfg.seed, next_id);
            next_id += 1;
            set.detections.push(
                DetectionTrack::new(id, video.video_id.clone(), score, masks).with_pred_iou(pred_iou),
            );
        };
        let dims = gt_masks.iter().find_map(MaskTrack::dims);

        for gt in &gt_masks {
            if rng.random_bool(cfg.miss_rate) {
                continue;
            }
            let copies = if rng.random_bool(cfg.duplicate_rate) { 2 } else { 1 };
            for copy in 0..copies {
                let target = rng.random_range(cfg.target_iou_lo..=cfg.target_iou_hi);
                let masks = perturb_track(gt, target, &mut rng)?.masks;
                let truth = true_frame_ious(&masks, &gt_masks)?;
                let mean = truth.iter().sum::<f64>() / truth.len().max(1) as f64;
                let mut score = noisy(mean, noise.as_ref(), &mut rng);
                if copy > 0 {
                    score *= 0.9;
                }
                let pred: Vec<f64> = truth.iter().map(|&t| noisy(t, noise.as_ref(), &mut rng)).collect();
                emit(&mut set, masks, score, pred);
            }
        }

        if let Some((h, w)) = dims {
            let whole = libm::floor(cfg.false_positive_rate) as usize;
            let frac = cfg.false_positive_rate - whole as f64;
            let n_fp = whole + rng.random_bool(frac) as usize;
            for _ in 0..n_fp {
                for _attempt in 0..20 {
                    let masks = random_blob_track(h, w, video.num_frames, &mut rng);
                    let mut worst = 0.0f64;
                    for gt in &gt_masks {
                        worst = worst.max(track_iou(&masks, gt)?);
                    }
                    if worst >= FP_MAX_IOU || masks.is_blank() {
                        continue;
                    }
                    let truth = true_frame_ious(&masks, &gt_masks)?;
                    let pred: Vec<f64> = truth.iter().map(|&t| noisy(t, noise.as_ref(), &mut rng)).collect();
                    let score = rng.random_range(0.1..=0.6);
                    emit(&mut set, masks, score, pred);
                    break;
                }
            }
        }
        out.push(set);
    }
    Ok(out)
}

/// Shape of a synthetic ground-truth corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub videos: usize,
    pub frames: usize,
    pub height: u32,
    pub width: u32,
    pub max_objects: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            videos: 20,
            frames: 10,
            height: 64,
            width: 64,
            max_objects: 3,
            seed: 0,
        }
    }
}

/// Videos of 1..=max_objects ellipses drifting linearly; some objects enter
/// late or leave early.
pub fn synth_ground_truth(cfg: &SynthConfig) -> Result<Vec<GroundTruthVideo>> {
    if cfg.height == 0 || cfg.width == 0 || cfg.frames == 0 || cfg.max_objects == 0 {
        return Err(Error::InvalidBitmap);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let min_side = h.min(w);
    let mut videos = Vec::with_capacity(cfg.videos);
    let mut next_gt = 0usize;
    for v in 0..cfg.videos {
        let n_obj = rng.random_range(1..=cfg.max_objects);
        let mut tracks = Vec::with_capacity(n_obj);
        for _ in 0..n_obj {
            let ry = rng.random_range(min_side / 10.0..=min_side / 5.0);
            let rx = rng.random_range(min_side / 10.0..=min_side / 5.0);
            let mut cy = rng.random_range(ry..=h - ry);
            let mut cx = rng.random_range(rx..=w - rx);
            let vy = rng.random_range(-1.5..=1.5);
            let vx = rng.random_range(-1.5..=1.5);
            let (start, end) = if rng.random_bool(0.25) && cfg.frames > 3 {
                let s = rng.random_range(0..cfg.frames / 3);
                (s, cfg.frames - rng.random_range(0..cfg.frames / 3))
            } else {
                (0, cfg.frames)
            };
            let mut frames = Vec::with_capacity(cfg.frames);
            for t in 0..cfg.frames {
                if t >= start && t < end {
                    frames.push(Some(ellipse(cfg.height, cfg.width, cy, cx, ry, rx)));
                } else {
                    frames.push(None);
                }
                cy = (cy + vy).clamp(ry, h - ry);
                cx = (cx + vx).clamp(rx, w - rx);
            }
            tracks.push(GroundTruthTrack {
                gt_id: format!("{next_gt}"),
                category_id: 1,
                masks: MaskTrack::new(frames)?,
            });
            next_gt += 1;
        }
        videos.push(GroundTruthVideo {
            video_id: format!("video{v:04}"),
            num_frames: cfg.frames,
            tracks,
        });
    }
    Ok(videos)
}

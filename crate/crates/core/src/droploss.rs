//! DropLoss: zero the mask loss of predictions that barely touch any ground
//! truth, plus a BCE + Dice stand-in for the vanilla mask loss.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mask::{frame_ious, rle_decode, track_iou, FrameMask, MaskTrack};

/// Probability clamp for the BCE term.
pub const BCE_EPS: f64 = 1e-7;
/// Additive smoothing for the Dice term, in pixels.
pub const DICE_SMOOTH: f64 = 1.0;

/// How the max ground-truth overlap of a prediction is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IouMode {
    /// Track IoU over the whole video.
    #[default]
    Track,
    /// Best single-frame IoU.
    Frame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub prediction_id: alloc::string::String,
    pub max_gt_iou: f64,
    pub vanilla_loss: f64,
    pub gated_loss: f64,
}

/// Max overlap of `pred` with any ground-truth track; 0 with no ground truth.
pub fn max_gt_iou(pred: &MaskTrack, gts: &[MaskTrack], mode: IouMode) -> Result<f64> {
    let mut best = 0.0f64;
    for gt in gts {
        let iou = match mode {
            IouMode::Track => track_iou(pred, gt)?,
            IouMode::Frame => frame_ious(pred, gt)?
                .into_iter()
                .flatten()
                .fold(0.0, f64::max),
        };
        best = best.max(iou);
    }
    Ok(best)
}

/// Passes a loss through iff its overlap is strictly above `tau_iou`.
pub fn gate(max_gt_iou: f64, vanilla_loss: f64, tau_iou: f64) -> f64 {
    if max_gt_iou > tau_iou {
        vanilla_loss
    } else {
        0.0
    }
}

/// Applies [`gate`] to `(max_gt_iou, vanilla_loss)` pairs.
pub fn drop_gate(records: &[(f64, f64)], tau_iou: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&tau_iou) {
        return Err(Error::OutOfRange {
            name: "tau_iou",
            value: tau_iou,
        });
    }
    records
        .iter()
        .map(|&(iou, loss)| {
            if loss < 0.0 || loss.is_nan() {
                return Err(Error::NegativeLoss(loss));
            }
            Ok(gate(iou, loss, tau_iou))
        })
        .collect()
}

/// Mean binary cross-entropy plus `1 - Dice` of column-major pixel
/// probabilities against a ground-truth mask.
pub fn reference_mask_loss(pred_probs: &[f64], gt: &FrameMask) -> Result<f64> {
    let n = gt.height() as usize * gt.width() as usize;
    if pred_probs.len() != n {
        return Err(Error::LengthMismatch(pred_probs.len(), n));
    }
    let target = rle_decode(gt);
    let mut bce = 0.0;
    let mut overlap = 0.0;
    let mut pred_sum = 0.0;
    let mut gt_sum = 0.0;
    for (&p, &g) in pred_probs.iter().zip(target.as_column_major()) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRange {
                name: "probability",
                value: p,
            });
        }
        let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        if g {
            bce -= libm::log(pc);
            overlap += p;
            gt_sum += 1.0;
        } else {
            bce -= libm::log(1.0 - pc);
        }
        pred_sum += p;
    }
    let dice = (2.0 * overlap + DICE_SMOOTH) / (pred_sum + gt_sum + DICE_SMOOTH);
    Ok(bce / n as f64 + (1.0 - dice))
}
